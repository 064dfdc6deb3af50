#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <set>

#include "archdiff/bo.hpp"
#include "archdiff/errors.hpp"
#include "archdiff/commands.hpp"
#include "archdiff/oracle.hpp"
#include "archdiff/sampler.hpp"

namespace py = pybind11;
using namespace archdiff;

namespace {

std::vector<std::vector<double>> tensor_to_lists(const Tensor& t) {
    std::vector<std::vector<double>> out(t.rows);
    for (int i = 0; i < t.rows; ++i)
        for (int j = 0; j < t.cols; ++j) out[i].push_back(t.at(i, j));
    return out;
}

Tensor tensor_from_lists(const std::vector<std::vector<double>>& rows) {
    const int r = static_cast<int>(rows.size());
    const int c = r > 0 ? static_cast<int>(rows[0].size()) : 0;
    Tensor t(r, c);
    for (int i = 0; i < r; ++i) {
        if (static_cast<int>(rows[i].size()) != c) {
            throw DimensionError("ragged matrix");
        }
        for (int j = 0; j < c; ++j) t.at(i, j) = rows[i][j];
    }
    return t;
}

Architecture make_arch(const SpacePtr& space, const std::vector<std::vector<double>>& v,
                       const std::vector<std::vector<double>>& e) {
    Architecture a;
    a.space = space;
    a.v = tensor_from_lists(v);
    a.e = tensor_from_lists(e);
    return a;
}

}  // namespace

PYBIND11_MODULE(_archdiff, m) {
    m.doc() = "diffusion-based architecture generation: C++ core bindings";

    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<CapacityError>(m, "CapacityError", PyExc_RuntimeError);

    py::class_<SearchSpaceSpec, std::shared_ptr<SearchSpaceSpec>>(m, "SearchSpace")
        .def_property_readonly("name", [](const SearchSpaceSpec& s) { return s.name; })
        .def_property_readonly("num_nodes", [](const SearchSpaceSpec& s) { return s.num_nodes; })
        .def_property_readonly("num_ops", &SearchSpaceSpec::num_ops)
        .def_property_readonly("op_vocab", [](const SearchSpaceSpec& s) { return s.op_vocab; })
        .def("cardinality", [](const SearchSpaceSpec& s) -> std::optional<long long> {
            return s.cardinality();
        });
    m.def("make_space",
          [](const std::string& name) {
              return std::const_pointer_cast<SearchSpaceSpec>(make_space(name));
          },
          py::arg("name"));

    py::class_<Architecture>(m, "Architecture")
        .def_property_readonly("v", [](const Architecture& a) { return tensor_to_lists(a.v); })
        .def_property_readonly("e", [](const Architecture& a) { return tensor_to_lists(a.e); })
        .def_property_readonly("space_name",
                               [](const Architecture& a) { return a.space->name; })
        .def("key", &canonical_key)
        .def("to_json", &arch_to_json)
        .def("is_valid", [](const Architecture& a) { return validate(a).valid; })
        .def("validate", [](const Architecture& a) {
            auto r = validate(a);
            return py::make_tuple(r.valid, r.reason);
        });

    m.def("arch", &make_arch, py::arg("space"), py::arg("v"), py::arg("e"),
          "build an architecture from 0/1 matrices");
    m.def("arch_from_json",
          [](const std::string& line, const SpacePtr& space) {
              return arch_from_json(line, space);
          });
    m.def("arch_from_key", &arch_from_key);
    m.def("random_arch", [](const SpacePtr& space, std::uint64_t seed) {
        Rng rng(seed, 0);
        return random_arch(space, rng);
    });
    m.def("mutate", [](const Architecture& a, std::uint64_t seed) {
        Rng rng(seed, 0);
        return mutate(a, rng);
    });
    m.def("enumerate_space", [](const SpacePtr& space) { return enumerate_space(space); });

    m.def("oracle_acc", &oracle_acc);
    m.def("oracle_latency", &oracle_latency);
    m.def("build_table", [](const std::string& space_name, const std::string& out_path) {
        RunConfig cfg;
        cfg.space = space_name;
        auto out = cmd_oracle_build(cfg, out_path);
        return out.entries;
    });

    m.def("sample_metrics",
          [](const std::vector<Architecture>& samples, const std::set<std::string>& train_keys) {
              auto r = sample_metrics(samples, train_keys);
              py::dict d;
              d["validity"] = r.validity;
              d["uniqueness"] = r.uniqueness ? py::object(py::float_(*r.uniqueness))
                                             : py::object(py::none());
              d["novelty"] =
                  r.novelty ? py::object(py::float_(*r.novelty)) : py::object(py::none());
              return d;
          },
          py::arg("samples"), py::arg("train_keys") = std::set<std::string>{});

    m.def("marginal_std",
          [](double t, double sigma_min, double sigma_max) {
              VeSdeConfig cfg;
              cfg.sigma_min = sigma_min;
              cfg.sigma_max = sigma_max;
              return marginal_std(cfg, t);
          },
          py::arg("t"), py::arg("sigma_min") = 0.1, py::arg("sigma_max") = 5.0);
    m.def("diffusion_coeff",
          [](double t, double sigma_min, double sigma_max) {
              VeSdeConfig cfg;
              cfg.sigma_min = sigma_min;
              cfg.sigma_max = sigma_max;
              return diffusion_coeff(cfg, t);
          },
          py::arg("t"), py::arg("sigma_min") = 0.1, py::arg("sigma_max") = 5.0);

    m.def("acquisition",
          [](const std::string& kind, double mu, double sigma, double y_max, double beta,
             std::uint64_t seed) {
              Rng rng(seed, 0);
              return acquisition(acq_from_string(kind), mu, sigma, y_max, beta, rng);
          },
          py::arg("kind"), py::arg("mu"), py::arg("sigma"), py::arg("y_max"),
          py::arg("beta") = 1.0, py::arg("seed") = 0);

    py::class_<ScoreNet>(m, "ScoreNet")
        .def_static("load", &ScoreNet::load)
        .def("save", &ScoreNet::save)
        .def_property_readonly("space_name",
                               [](const ScoreNet& n) { return n.space()->name; });

    py::class_<Predictor>(m, "Predictor")
        .def_static("load", &Predictor::load)
        .def("save", &Predictor::save)
        .def("predict",
             [](const Predictor& p, const Architecture& a, double t) {
                 return p.predict(to_continuous(a, t), t);
             },
             py::arg("arch"), py::arg("t") = 1e-5);

    m.def("train_score",
          [](const std::string& space_name, int steps, std::uint64_t seed) {
              auto space = make_space(space_name);
              auto cfg = ScoreNetConfig::desk();
              cfg.train_steps = steps;
              auto result = train_scorenet(space, enumerate_space(space), cfg, VeSdeConfig{},
                                           Rng(seed, 0));
              return py::make_tuple(std::move(result.net), result.loss_curve);
          },
          py::arg("space"), py::arg("steps") = 3000, py::arg("seed") = 0);

    m.def("train_predictor",
          [](const std::string& space_name, const std::vector<std::pair<Architecture, double>>& pop,
             bool noise_aware, bool nll, int steps, std::uint64_t seed) {
              auto space = make_space(space_name);
              auto cfg = PredictorConfig::desk();
              cfg.train_steps = steps;
              auto result = nll ? gaussian_fit(space, pop, cfg, VeSdeConfig{}, Rng(seed, 0))
                                : train_predictor(space, pop, cfg, noise_aware, VeSdeConfig{},
                                                  Rng(seed, 0));
              return py::make_tuple(std::move(result.model), result.loss_curve);
          },
          py::arg("space"), py::arg("population"), py::arg("noise_aware") = true,
          py::arg("nll") = false, py::arg("steps") = 2000, py::arg("seed") = 0);

    m.def("sample",
          [](const ScoreNet& net, int n, int num_steps, std::uint64_t seed, int threads,
             const std::string& mode) {
              SamplerConfig cfg;
              cfg.batch = n;
              cfg.num_steps = num_steps;
              cfg.threads = threads;
              auto samples = sample_batch(net, cfg, Rng(seed, 0));
              std::vector<Architecture> out;
              const DiscretizeMode dm =
                  mode == "snap" ? DiscretizeMode::kSnap : DiscretizeMode::kThreshold;
              for (const auto& s : samples) out.push_back(discretize(s.state, dm));
              return out;
          },
          py::arg("net"), py::arg("n") = 16, py::arg("num_steps") = 1000, py::arg("seed") = 0,
          py::arg("threads") = 1, py::arg("mode") = "threshold");

    m.def("guided_sample",
          [](const ScoreNet& net, const Predictor& pred, double k, const std::string& mode,
             double target, int n, int num_steps, std::uint64_t seed, int threads) {
              SamplerConfig cfg;
              cfg.batch = n;
              cfg.num_steps = num_steps;
              cfg.threads = threads;
              GuidanceConfig g;
              g.k = k;
              g.mode = guidance_mode_from_string(mode);
              g.target = target;
              std::vector<GuidedPredictor> guides{GuidedPredictor{&pred, 1.0, nullptr}};
              auto samples = guided_sample_batch(net, guides, g, cfg, Rng(seed, 0));
              std::vector<std::pair<Architecture, std::optional<double>>> out;
              for (const auto& s : samples) {
                  out.emplace_back(discretize(s.state, DiscretizeMode::kSnap), s.pred_y);
              }
              return out;
          },
          py::arg("net"), py::arg("predictor"), py::arg("k") = 1.0,
          py::arg("mode") = "gaussian", py::arg("target") = 1.0, py::arg("n") = 16,
          py::arg("num_steps") = 1000, py::arg("seed") = 0, py::arg("threads") = 1);

    m.def("bo_run",
          [](const std::string& space_name, const std::string& table_path,
             const std::string& strategy, const std::string& acq, int n0, int budget,
             int candidates, int ensemble, std::uint64_t seed, int threads,
             const ScoreNet* scorenet) {
              auto space = make_space(space_name);
              auto table = load_table(table_path);
              OracleFn h = [&](const Architecture& a) {
                  return table.acc_of(canonical_key(a));
              };
              BoConfig cfg = BoConfig::desk();
              cfg.strategy = strategy_from_string(strategy);
              cfg.acq = acq_from_string(acq);
              cfg.n0 = n0;
              cfg.budget = budget;
              cfg.candidates = candidates;
              cfg.ensemble = ensemble;
              cfg.threads = threads;
              auto r = bo_loop(space, h, cfg, scorenet, Rng(seed, 3));
              py::list history;
              for (const auto& row : r.history) {
                  py::dict d;
                  d["iteration"] = row.iteration;
                  d["chosen_key"] = row.chosen_key;
                  d["y"] = row.y;
                  d["best_so_far"] = row.best_so_far;
                  history.append(d);
              }
              return py::make_tuple(r.best, r.best_y, history);
          },
          py::arg("space"), py::arg("table_path"), py::arg("strategy") = "random",
          py::arg("acq") = "pi", py::arg("n0") = 10, py::arg("budget") = 40,
          py::arg("candidates") = 16, py::arg("ensemble") = 5, py::arg("seed") = 0,
          py::arg("threads") = 1, py::arg("scorenet") = nullptr);

    m.attr("__version__") = "0.1.0";
}
