#include "gracias/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "gracias/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload layout assumes a little-endian host");

namespace gracias {

namespace {

using nlohmann::json;

std::size_t product(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

struct ConvDims {
  std::size_t h, w, cin, ph, pw, features;
};

ConvDims conv_dims(const ClassifierParams& p) {
  ConvDims d{};
  d.h = p.input_shape[0];
  d.w = p.input_shape[1];
  d.cin = p.input_shape[2];
  d.ph = d.h / 2;
  d.pw = d.w / 2;
  d.features = p.channels * d.ph * d.pw;
  return d;
}

// Shared pieces of the conv-small forward pass, kept so backprop can reuse
// the intermediate activations.
struct ConvTrace {
  Tensor pre;      // [oc,H,W] pre-activation
  Tensor pooled;   // [features]
  std::vector<std::size_t> argmax;  // flat (i*W+j) winner per pooled cell
};

ConvTrace conv_forward(const ClassifierParams& p, const Tensor& x) {
  const ConvDims dims = conv_dims(p);
  const Tensor& kern = p.weights[0];
  const Tensor& bias = p.weights[1];
  ConvTrace trace{Tensor({p.channels, dims.h, dims.w}), Tensor({dims.features}),
                  std::vector<std::size_t>(dims.features, 0)};

  const long h = static_cast<long>(dims.h), w = static_cast<long>(dims.w);
  for (std::size_t oc = 0; oc < p.channels; ++oc) {
    for (long i = 0; i < h; ++i) {
      for (long j = 0; j < w; ++j) {
        double acc = bias[oc];
        for (long a = 0; a < 3; ++a) {
          const long ii = i + a - 1;
          if (ii < 0 || ii >= h) continue;
          for (long b = 0; b < 3; ++b) {
            const long jj = j + b - 1;
            if (jj < 0 || jj >= w) continue;
            for (std::size_t ic = 0; ic < dims.cin; ++ic) {
              acc += x(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), ic) *
                     kern[((oc * 3 + static_cast<std::size_t>(a)) * 3 + static_cast<std::size_t>(b)) *
                              dims.cin +
                          ic];
            }
          }
        }
        trace.pre(oc, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = acc;
      }
    }
  }

  for (std::size_t oc = 0; oc < p.channels; ++oc) {
    for (std::size_t pi = 0; pi < dims.ph; ++pi) {
      for (std::size_t pj = 0; pj < dims.pw; ++pj) {
        double best = -1.0;  // ReLU output is >= 0, start below
        std::size_t arg = 2 * pi * dims.w + 2 * pj;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t i = 2 * pi + di, j = 2 * pj + dj;
            const double v = std::max(trace.pre(oc, i, j), 0.0);
            if (v > best) {  // strict: first row-major occurrence wins ties
              best = v;
              arg = i * dims.w + j;
            }
          }
        }
        const std::size_t cell = (oc * dims.ph + pi) * dims.pw + pj;
        trace.pooled[cell] = best;
        trace.argmax[cell] = arg;
      }
    }
  }
  return trace;
}

Tensor dense(const Tensor& weight, const Tensor& bias, const Tensor& x) {
  Tensor out = matvec(weight, x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i];
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], 0.0);
  return out;
}

double cross_entropy(const Tensor& logits, std::size_t y, Tensor* probs_out) {
  double m = logits[0];
  for (double v : logits.values()) m = std::max(m, v);
  double sum = 0.0;
  Tensor p({logits.size()});
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (std::size_t i = 0; i < p.size(); ++i) p[i] /= sum;
  if (probs_out != nullptr) *probs_out = p;
  return std::log(sum) + m - logits[y];
}

}  // namespace

std::string arch_name(Arch arch) {
  switch (arch) {
    case Arch::Linear: return "linear";
    case Arch::Mlp: return "mlp";
    case Arch::ConvSmall: return "conv-small";
  }
  throw std::logic_error("unknown architecture");
}

Arch arch_from_name(const std::string& name) {
  if (name == "linear") return Arch::Linear;
  if (name == "mlp") return Arch::Mlp;
  if (name == "conv-small") return Arch::ConvSmall;
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

std::size_t ClassifierParams::input_size() const { return product(input_shape); }

void ClassifierParams::validate() const {
  if (input_shape.size() != 3) throw std::invalid_argument("classifier: input shape must be H,W,C");
  if (num_classes < 2) throw std::invalid_argument("classifier: need at least two classes");
  std::vector<std::vector<std::size_t>> expected;
  const std::size_t n = input_size();
  switch (arch) {
    case Arch::Linear:
      expected = {{num_classes, n}, {num_classes}};
      break;
    case Arch::Mlp:
      expected = {{hidden, n}, {hidden}, {num_classes, hidden}, {num_classes}};
      break;
    case Arch::ConvSmall: {
      const ConvDims d = conv_dims(*this);
      if (d.ph == 0 || d.pw == 0) throw std::invalid_argument("classifier: image too small for pooling");
      expected = {{channels, 3, 3, d.cin}, {channels}, {num_classes, d.features}, {num_classes}};
      break;
    }
  }
  if (weights.size() != expected.size()) throw std::invalid_argument("classifier: wrong weight count");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (weights[i].shape() != expected[i]) {
      throw std::invalid_argument("classifier: weight " + std::to_string(i) + " has shape " +
                                  shape_string(weights[i].shape()) + ", expected " +
                                  shape_string(expected[i]));
    }
  }
}

ClassifierParams init_classifier(Arch arch, std::vector<std::size_t> input_shape,
                                 std::size_t num_classes, std::uint64_t seed, std::size_t hidden,
                                 std::size_t channels) {
  ClassifierParams p;
  p.arch = arch;
  p.input_shape = std::move(input_shape);
  p.num_classes = num_classes;
  p.hidden = hidden;
  p.channels = channels;
  p.init_seed = seed;
  if (p.input_shape.size() != 3) throw std::invalid_argument("classifier: input shape must be H,W,C");

  const std::size_t n = p.input_size();
  Xoshiro256ss rng(seed);
  auto dense_init = [&rng](std::size_t rows, std::size_t cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    Tensor w({rows, cols});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
    return w;
  };

  switch (arch) {
    case Arch::Linear:
      p.weights = {dense_init(num_classes, n), Tensor({num_classes})};
      break;
    case Arch::Mlp:
      p.weights = {dense_init(hidden, n), Tensor({hidden}), dense_init(num_classes, hidden),
                   Tensor({num_classes})};
      break;
    case Arch::ConvSmall: {
      const std::size_t cin = p.input_shape[2];
      const double bound = 1.0 / std::sqrt(static_cast<double>(9 * cin));
      Tensor kern({channels, 3, 3, cin});
      for (std::size_t i = 0; i < kern.size(); ++i) kern[i] = rng.uniform(-bound, bound);
      const ConvDims d = conv_dims(p);
      if (d.ph == 0 || d.pw == 0) throw std::invalid_argument("classifier: image too small for pooling");
      p.weights = {std::move(kern), Tensor({channels}), dense_init(num_classes, d.features),
                   Tensor({num_classes})};
      break;
    }
  }
  p.validate();
  return p;
}

Tensor forward(const ClassifierParams& p, const Tensor& x) {
  if (x.shape() != p.input_shape) {
    throw std::invalid_argument("forward: input shape " + shape_string(x.shape()) +
                                " does not match model input " + shape_string(p.input_shape));
  }
  switch (p.arch) {
    case Arch::Linear:
      return dense(p.weights[0], p.weights[1], x.reshaped({p.input_size()}));
    case Arch::Mlp: {
      const Tensor h = relu(dense(p.weights[0], p.weights[1], x.reshaped({p.input_size()})));
      return dense(p.weights[2], p.weights[3], h);
    }
    case Arch::ConvSmall: {
      const ConvTrace trace = conv_forward(p, x);
      return dense(p.weights[2], p.weights[3], trace.pooled);
    }
  }
  throw std::logic_error("unknown architecture");
}

std::size_t predict(const ClassifierParams& p, const Tensor& x) {
  const Tensor logits = forward(p, x);
  std::size_t arg = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[arg]) arg = i;
  }
  return arg;
}

Tensor softmax(const Tensor& logits) {
  Tensor p;
  cross_entropy(logits, 0, &p);
  return p;
}

BackpropResult backprop(const ClassifierParams& p, const Tensor& x, std::size_t y) {
  if (y >= p.num_classes) {
    throw std::invalid_argument("backprop: label " + std::to_string(y) + " out of range");
  }
  if (x.shape() != p.input_shape) {
    throw std::invalid_argument("backprop: input shape mismatch");
  }

  BackpropResult res;
  res.param_grads.reserve(p.weights.size());
  for (const Tensor& w : p.weights) res.param_grads.emplace_back(w.shape());

  const std::size_t n = p.input_size();
  const Tensor xv = x.reshaped({n});

  switch (p.arch) {
    case Arch::Linear: {
      const Tensor logits = dense(p.weights[0], p.weights[1], xv);
      Tensor probs;
      res.loss = cross_entropy(logits, y, &probs);
      Tensor dlogits = probs;
      dlogits[y] -= 1.0;
      for (std::size_t c = 0; c < p.num_classes; ++c) {
        const double g = dlogits[c];
        res.param_grads[1][c] = g;
        for (std::size_t i = 0; i < n; ++i) res.param_grads[0](c, i) = g * xv[i];
      }
      res.input_grad = matvec(transpose(p.weights[0]), dlogits).reshaped(p.input_shape);
      break;
    }
    case Arch::Mlp: {
      const Tensor pre = dense(p.weights[0], p.weights[1], xv);
      const Tensor h = relu(pre);
      const Tensor logits = dense(p.weights[2], p.weights[3], h);
      Tensor probs;
      res.loss = cross_entropy(logits, y, &probs);
      Tensor dlogits = probs;
      dlogits[y] -= 1.0;

      for (std::size_t c = 0; c < p.num_classes; ++c) {
        const double g = dlogits[c];
        res.param_grads[3][c] = g;
        for (std::size_t j = 0; j < p.hidden; ++j) res.param_grads[2](c, j) = g * h[j];
      }
      Tensor dh = matvec(transpose(p.weights[2]), dlogits);
      for (std::size_t j = 0; j < p.hidden; ++j) {
        if (pre[j] <= 0.0) dh[j] = 0.0;
      }
      for (std::size_t j = 0; j < p.hidden; ++j) {
        const double g = dh[j];
        res.param_grads[1][j] = g;
        if (g != 0.0) {
          for (std::size_t i = 0; i < n; ++i) res.param_grads[0](j, i) = g * xv[i];
        }
      }
      res.input_grad = matvec(transpose(p.weights[0]), dh).reshaped(p.input_shape);
      break;
    }
    case Arch::ConvSmall: {
      const ConvDims dims = conv_dims(p);
      const ConvTrace trace = conv_forward(p, x);
      const Tensor logits = dense(p.weights[2], p.weights[3], trace.pooled);
      Tensor probs;
      res.loss = cross_entropy(logits, y, &probs);
      Tensor dlogits = probs;
      dlogits[y] -= 1.0;

      for (std::size_t c = 0; c < p.num_classes; ++c) {
        const double g = dlogits[c];
        res.param_grads[3][c] = g;
        for (std::size_t m = 0; m < dims.features; ++m) res.param_grads[2](c, m) = g * trace.pooled[m];
      }
      const Tensor dpooled = matvec(transpose(p.weights[2]), dlogits);

      // Route gradients back to the pool winners, gated by ReLU.
      Tensor dpre({p.channels, dims.h, dims.w});
      for (std::size_t oc = 0; oc < p.channels; ++oc) {
        for (std::size_t pi = 0; pi < dims.ph; ++pi) {
          for (std::size_t pj = 0; pj < dims.pw; ++pj) {
            const std::size_t cell = (oc * dims.ph + pi) * dims.pw + pj;
            const std::size_t i = trace.argmax[cell] / dims.w;
            const std::size_t j = trace.argmax[cell] % dims.w;
            if (trace.pre(oc, i, j) > 0.0) dpre(oc, i, j) = dpooled[cell];
          }
        }
      }

      const Tensor& kern = p.weights[0];
      Tensor& dkern = res.param_grads[0];
      Tensor& dbias = res.param_grads[1];
      res.input_grad = Tensor(p.input_shape);
      const long h = static_cast<long>(dims.h), w = static_cast<long>(dims.w);
      for (std::size_t oc = 0; oc < p.channels; ++oc) {
        for (long i = 0; i < h; ++i) {
          for (long j = 0; j < w; ++j) {
            const double g = dpre(oc, static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            if (g == 0.0) continue;
            dbias[oc] += g;
            for (long a = 0; a < 3; ++a) {
              const long ii = i + a - 1;
              if (ii < 0 || ii >= h) continue;
              for (long b = 0; b < 3; ++b) {
                const long jj = j + b - 1;
                if (jj < 0 || jj >= w) continue;
                for (std::size_t ic = 0; ic < dims.cin; ++ic) {
                  const std::size_t kidx =
                      ((oc * 3 + static_cast<std::size_t>(a)) * 3 + static_cast<std::size_t>(b)) *
                          dims.cin +
                      ic;
                  dkern[kidx] += g * x(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), ic);
                  res.input_grad(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), ic) +=
                      g * kern[kidx];
                }
              }
            }
          }
        }
      }
      break;
    }
  }
  return res;
}

LossInputGrad loss_and_input_grad(const ClassifierParams& p, const Tensor& x, std::size_t y) {
  BackpropResult res = backprop(p, x, y);
  return {res.loss, std::move(res.input_grad)};
}

TrainTrace train_sgd(ClassifierParams& params, const Batch& data, const TrainConfig& config) {
  params.validate();
  if (data.images.empty()) throw std::invalid_argument("train_sgd: empty dataset");
  if (data.images.size() != data.labels.size()) {
    throw std::invalid_argument("train_sgd: image/label count mismatch");
  }
  for (std::size_t y : data.labels) {
    if (y >= params.num_classes) throw std::invalid_argument("train_sgd: label out of range");
  }
  if (config.batch == 0) throw std::invalid_argument("train_sgd: batch size must be positive");

  const std::size_t n = data.images.size();
  Xoshiro256ss rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainTrace trace;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = rng.uniform_int(0, i);
      std::swap(order[i], order[j]);
    }

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch) {
      const std::size_t stop = std::min(start + config.batch, n);
      std::vector<Tensor> grads;
      grads.reserve(params.weights.size());
      for (const Tensor& w : params.weights) grads.emplace_back(w.shape());

      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = order[b];
        BackpropResult res = backprop(params, data.images[idx], data.labels[idx]);
        epoch_loss += res.loss;
        for (std::size_t w = 0; w < grads.size(); ++w) {
          for (std::size_t e = 0; e < grads[w].size(); ++e) grads[w][e] += res.param_grads[w][e];
        }
      }
      const double step = config.lr / static_cast<double>(stop - start);
      for (std::size_t w = 0; w < grads.size(); ++w) {
        for (std::size_t e = 0; e < grads[w].size(); ++e) params.weights[w][e] -= step * grads[w][e];
      }
    }
    trace.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
  }
  return trace;
}

double accuracy(const ClassifierParams& params, const Batch& data) {
  if (data.images.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    if (predict(params, data.images[i]) == data.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.images.size());
}

void save_checkpoint(const ClassifierParams& params, const std::string& path) {
  params.validate();
  json header;
  header["architecture"] = arch_name(params.arch);
  header["channels"] = params.channels;
  header["format"] = "gracias-checkpoint-v1";
  header["hidden"] = params.hidden;
  header["input_shape"] = params.input_shape;
  header["num_classes"] = params.num_classes;
  header["seed"] = params.init_seed;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out << header.dump() << "\n";
  for (const Tensor& w : params.weights) {
    out.write(reinterpret_cast<const char*>(w.data()),
              static_cast<std::streamsize>(w.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

ClassifierParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint missing JSON header: " + path);

  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  if (header.value("format", "") != "gracias-checkpoint-v1") {
    throw std::runtime_error("unsupported checkpoint format in " + path);
  }

  ClassifierParams p;
  p.arch = arch_from_name(header.at("architecture").get<std::string>());
  p.input_shape = header.at("input_shape").get<std::vector<std::size_t>>();
  p.num_classes = header.at("num_classes").get<std::size_t>();
  p.hidden = header.at("hidden").get<std::size_t>();
  p.channels = header.at("channels").get<std::size_t>();
  p.init_seed = header.at("seed").get<std::uint64_t>();

  // Rebuild with the recorded geometry, then overwrite the payload.
  ClassifierParams shaped = init_classifier(p.arch, p.input_shape, p.num_classes, 0, p.hidden, p.channels);
  p.weights = std::move(shaped.weights);
  for (Tensor& w : p.weights) {
    in.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint payload truncated: " + path);
  }
  char extra;
  if (in.read(&extra, 1)) throw std::runtime_error("checkpoint payload has trailing bytes: " + path);
  for (const Tensor& w : p.weights) w.check_finite("checkpoint payload");
  p.validate();
  return p;
}

}  // namespace gracias
