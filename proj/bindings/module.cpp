#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gracias/attacks.hpp"
#include "gracias/conv.hpp"
#include "gracias/dataset.hpp"
#include "gracias/defense.hpp"
#include "gracias/experiment.hpp"
#include "gracias/grassmann.hpp"
#include "gracias/io.hpp"
#include "gracias/linalg.hpp"
#include "gracias/model.hpp"
#include "gracias/rng.hpp"

namespace py = pybind11;
using namespace gracias;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  std::vector<std::size_t> shape(arr.ndim());
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<std::size_t>(i)] = arr.shape(i);
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> arr(shape);
  std::copy(t.data(), t.data() + t.size(), arr.mutable_data());
  return arr;
}

using NpArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

DefenseConfig config_from_kwargs(std::size_t k_min, std::size_t k_max, std::size_t kernel_size,
                                 double var_min, double var_max, std::uint64_t seed) {
  DefenseConfig cfg;
  cfg.k_min = k_min;
  cfg.k_max = k_max;
  cfg.kernel_size = kernel_size;
  cfg.var_min = var_min;
  cfg.var_max = var_max;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

GrassmannPoint point_from_array(const NpArray& basis) {
  return GrassmannPoint{tensor_from_array(basis)};
}

AttackConfig attack_config(double eps255, double step255, std::size_t iters, std::size_t eot_samples) {
  return AttackConfig::from_pixel_scale(eps255, step255, iters, eot_samples);
}

}  // namespace

PYBIND11_MODULE(pygracias, m) {
  m.doc() = "randomized-subspace image defense: core operations";

  // tensor kernels
  m.def(
      "conv2d_same",
      [](const NpArray& image, const NpArray& kernel) {
        return array_from_tensor(conv2d_same(tensor_from_array(image), tensor_from_array(kernel)));
      },
      py::arg("image"), py::arg("kernel"));

  m.def(
      "sym_eig",
      [](const NpArray& a) {
        const EigenResult res = sym_eig(tensor_from_array(a));
        return py::make_tuple(array_from_tensor(res.values), array_from_tensor(res.vectors));
      },
      py::arg("matrix"), "eigenvalues (descending) and orthonormal eigenvector columns");

  m.def(
      "thin_svd",
      [](const NpArray& a) {
        const SvdResult res = thin_svd(tensor_from_array(a));
        return py::make_tuple(array_from_tensor(res.U), array_from_tensor(res.S),
                              array_from_tensor(res.V), res.rank);
      },
      py::arg("matrix"), "U, S, V, rank via the k x k Gram route");

  // defense
  m.def(
      "sample_kernel",
      [](std::size_t size, std::uint64_t seed) {
        Xoshiro256ss rng(seed);
        return array_from_tensor(sample_kernel(size, rng));
      },
      py::arg("size"), py::arg("seed"));

  m.def(
      "gracias_defend",
      [](const NpArray& image, std::size_t k_min, std::size_t k_max, std::size_t kernel_size,
         double var_min, double var_max, std::uint64_t seed) {
        Xoshiro256ss rng(seed);
        DefenseStats stats;
        const Tensor out = gracias_defend(
            tensor_from_array(image),
            config_from_kwargs(k_min, k_max, kernel_size, var_min, var_max, seed), rng, &stats);
        py::dict info;
        info["degenerate"] = stats.degenerate;
        info["k"] = stats.k;
        info["d"] = stats.d;
        info["variance_fraction"] = stats.variance_fraction;
        return py::make_tuple(array_from_tensor(out), info);
      },
      py::arg("image"), py::arg("k_min") = 10, py::arg("k_max") = 60, py::arg("kernel_size") = 7,
      py::arg("var_min") = 0.60, py::arg("var_max") = 0.95, py::arg("seed") = 0);

  m.def(
      "bitdepth_reduce",
      [](const NpArray& image, int bits) {
        return array_from_tensor(bitdepth_reduce(tensor_from_array(image), bits));
      },
      py::arg("image"), py::arg("bits"));

  // grassmann geometry
  m.def(
      "principal_angles",
      [](const NpArray& a, const NpArray& b) {
        return array_from_tensor(principal_angles(point_from_array(a), point_from_array(b)));
      },
      py::arg("basis_a"), py::arg("basis_b"));
  m.def(
      "geodesic_distance",
      [](const NpArray& a, const NpArray& b) {
        return geodesic_distance(point_from_array(a), point_from_array(b));
      },
      py::arg("basis_a"), py::arg("basis_b"));
  m.def(
      "normalized_geodesic",
      [](const NpArray& a, const NpArray& b) {
        return normalized_geodesic(point_from_array(a), point_from_array(b));
      },
      py::arg("basis_a"), py::arg("basis_b"));
  m.def(
      "bttb_matrix",
      [](const NpArray& kernel, std::size_t height, std::size_t width) {
        return array_from_tensor(bttb_matrix(tensor_from_array(kernel), height, width));
      },
      py::arg("kernel"), py::arg("height"), py::arg("width"));
  m.def(
      "sigma_min", [](const NpArray& m) { return sigma_min(tensor_from_array(m)); }, py::arg("matrix"));

  m.def(
      "verify_bound",
      [](std::size_t trials, std::size_t height, std::size_t width, std::size_t k,
         std::size_t kernel_size, double eps255, std::uint64_t seed) {
        BoundGeometry geom;
        geom.height = height;
        geom.width = width;
        geom.k = k;
        geom.kernel_size = kernel_size;
        Xoshiro256ss rng(seed);
        const BoundReport rep = verify_bound(trials, geom, eps255 / 255.0, rng);
        py::dict d;
        d["trials"] = rep.trials;
        d["evaluated"] = rep.evaluated;
        d["degenerate"] = rep.degenerate;
        d["violations_squared"] = rep.violations_squared;
        d["violations_unsquared"] = rep.violations_unsquared;
        d["lhs_mean"] = rep.lhs_mean;
        d["lhs_max"] = rep.lhs_max;
        d["min_margin_squared"] = rep.min_margin_squared;
        return d;
      },
      py::arg("trials"), py::arg("height") = 8, py::arg("width") = 8, py::arg("k") = 12,
      py::arg("kernel_size") = 3, py::arg("eps") = 8.0, py::arg("seed") = 0);

  // data
  m.def(
      "gen_synthetic",
      [](std::size_t classes, std::size_t per_class, std::size_t image_size, std::uint64_t seed,
         double noise) {
        const Dataset ds = gen_synthetic(classes, per_class, image_size, seed, noise);
        py::array_t<double> images({ds.size(), image_size, image_size, std::size_t{1}});
        double* dst = images.mutable_data();
        for (const Tensor& img : ds.images) {
          std::copy(img.data(), img.data() + img.size(), dst);
          dst += img.size();
        }
        py::array_t<std::size_t> labels(ds.size());
        std::copy(ds.labels.begin(), ds.labels.end(), labels.mutable_data());
        return py::make_tuple(images, labels);
      },
      py::arg("classes"), py::arg("per_class"), py::arg("image_size"), py::arg("seed"),
      py::arg("noise") = 0.04);

  m.def(
      "load_idx",
      [](const std::string& images_path, const std::string& labels_path) {
        const Dataset ds = load_idx(images_path, labels_path);
        py::list images;
        for (const Tensor& img : ds.images) images.append(array_from_tensor(img));
        py::array_t<std::size_t> labels(ds.size());
        std::copy(ds.labels.begin(), ds.labels.end(), labels.mutable_data());
        return py::make_tuple(images, labels);
      },
      py::arg("images_path"), py::arg("labels_path"));

  m.def("write_grct",
        [](const NpArray& t, const std::string& path) { write_grct(tensor_from_array(t), path); });
  m.def("read_grct", [](const std::string& path) { return array_from_tensor(read_grct(path)); });

  // classifier + attacks
  py::class_<ClassifierParams>(m, "Classifier")
      .def_static(
          "create",
          [](const std::string& arch, std::vector<std::size_t> input_shape, std::size_t num_classes,
             std::uint64_t seed, std::size_t hidden, std::size_t channels) {
            return init_classifier(arch_from_name(arch), std::move(input_shape), num_classes, seed,
                                   hidden, channels);
          },
          py::arg("arch"), py::arg("input_shape"), py::arg("num_classes"), py::arg("seed") = 0,
          py::arg("hidden") = 64, py::arg("channels") = 8)
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", &save_checkpoint, py::arg("path"))
      .def("forward",
           [](const ClassifierParams& p, const NpArray& x) {
             return array_from_tensor(forward(p, tensor_from_array(x)));
           })
      .def("predict",
           [](const ClassifierParams& p, const NpArray& x) { return predict(p, tensor_from_array(x)); })
      .def("loss_and_input_grad",
           [](const ClassifierParams& p, const NpArray& x, std::size_t y) {
             const LossInputGrad res = loss_and_input_grad(p, tensor_from_array(x), y);
             return py::make_tuple(res.loss, array_from_tensor(res.input_grad));
           })
      .def(
          "train",
          [](ClassifierParams& p, const py::list& images, const std::vector<std::size_t>& labels,
             double lr, std::size_t epochs, std::size_t batch, std::uint64_t seed) {
            Batch data;
            for (const auto& img : images) data.images.push_back(tensor_from_array(img.cast<NpArray>()));
            data.labels = labels;
            return train_sgd(p, data, TrainConfig{lr, epochs, batch, seed}).epoch_loss;
          },
          py::arg("images"), py::arg("labels"), py::arg("lr") = 0.1, py::arg("epochs") = 10,
          py::arg("batch") = 32, py::arg("seed") = 0)
      .def_property_readonly("num_classes", [](const ClassifierParams& p) { return p.num_classes; })
      .def_property_readonly("arch", [](const ClassifierParams& p) { return arch_name(p.arch); });

  m.def(
      "fgsm",
      [](const ClassifierParams& model, const NpArray& x, std::size_t y, double eps255) {
        const AttackResult res = fgsm(model, tensor_from_array(x), y, eps255 / 255.0);
        return py::make_tuple(array_from_tensor(res.adversarial), res.linf, res.success);
      },
      py::arg("model"), py::arg("x"), py::arg("y"), py::arg("eps") = 16.0);

  m.def(
      "pgd",
      [](const ClassifierParams& model, const NpArray& x, std::size_t y, double eps255,
         double step255, std::size_t iters) {
        const AttackResult res = pgd(model, tensor_from_array(x), y, attack_config(eps255, step255, iters, 1));
        return py::make_tuple(array_from_tensor(res.adversarial), res.linf, res.success);
      },
      py::arg("model"), py::arg("x"), py::arg("y"), py::arg("eps") = 16.0, py::arg("eps_step") = 2.0,
      py::arg("iters") = 40);

  m.def(
      "bpda_pgd",
      [](const ClassifierParams& model, const NpArray& x, std::size_t y, double eps255,
         double step255, std::size_t iters, std::size_t k_min, std::size_t k_max,
         std::size_t kernel_size, double var_min, double var_max, std::uint64_t defense_seed) {
        DefenseConfig cfg = config_from_kwargs(k_min, k_max, kernel_size, var_min, var_max, defense_seed);
        const AttackResult res = bpda_attack(model, make_gracias_defense(cfg), tensor_from_array(x), y,
                                             attack_config(eps255, step255, iters, 1));
        return py::make_tuple(array_from_tensor(res.adversarial), res.linf, res.success);
      },
      py::arg("model"), py::arg("x"), py::arg("y"), py::arg("eps") = 16.0, py::arg("eps_step") = 2.0,
      py::arg("iters") = 40, py::arg("k_min") = 10, py::arg("k_max") = 60, py::arg("kernel_size") = 7,
      py::arg("var_min") = 0.60, py::arg("var_max") = 0.95, py::arg("defense_seed") = 0);
}
