#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "cdl/app.hpp"
#include "cdl/checkpoint.hpp"
#include "cdl/config.hpp"
#include "cdl/coupling.hpp"
#include "cdl/data.hpp"
#include "cdl/error.hpp"
#include "cdl/eval.hpp"
#include "cdl/linalg.hpp"
#include "cdl/ranking.hpp"
#include "cdl/trainer.hpp"

namespace py = pybind11;
using namespace cdl;

namespace {

std::vector<Modality> to_modalities(const std::vector<int>& m) {
  std::vector<Modality> out;
  out.reserve(m.size());
  for (int v : m) {
    if (v != 0 && v != 1) throw DataError("modality must be 0 (nir) or 1 (vis), got " + std::to_string(v));
    out.push_back(static_cast<Modality>(v));
  }
  return out;
}

std::vector<int> from_modalities(const std::vector<Modality>& m) {
  std::vector<int> out;
  out.reserve(m.size());
  for (Modality v : m) out.push_back(static_cast<int>(v));
  return out;
}

Dataset make_dataset(const Matrix& features, const std::vector<int>& labels,
                     const std::vector<int>& modalities) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (labels.size() != n || modalities.size() != n) {
    throw DataError("dataset: features, labels and modalities must have the same length");
  }
  const std::vector<Modality> mods = to_modalities(modalities);
  Dataset d(static_cast<int>(features.cols()));
  for (std::size_t i = 0; i < n; ++i) {
    d.add({features.row(Eigen::Index(i)).transpose(), labels[i], mods[i]});
  }
  return d;
}

Matrix triplets_to_matrix(const std::vector<Triplet>& ts) {
  Matrix out(Eigen::Index(ts.size()), 3);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    out(Eigen::Index(i), 0) = double(ts[i].anchor);
    out(Eigen::Index(i), 1) = double(ts[i].positive);
    out(Eigen::Index(i), 2) = double(ts[i].negative);
  }
  return out;
}

std::vector<Triplet> matrix_to_triplets(const Eigen::Matrix<long long, Eigen::Dynamic, 3, Eigen::RowMajor>& m) {
  std::vector<Triplet> ts;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if ((m.row(i).array() < 0).any()) throw DataError("triplet indices must be non-negative");
    ts.push_back({std::size_t(m(i, 0)), std::size_t(m(i, 1)), std::size_t(m(i, 2))});
  }
  return ts;
}

InterNormalization parse_norm(const std::string& s) {
  if (s == "samples") return InterNormalization::samples;
  if (s == "classes") return InterNormalization::classes;
  throw ConfigError("sigma normalization must be 'samples' or 'classes', got '" + s + "'");
}

py::dict roc_dict(const RocResult& r) {
  std::vector<double> thr, far, vr;
  for (const RocPoint& p : r.curve) {
    thr.push_back(p.threshold);
    far.push_back(p.far);
    vr.push_back(p.vr);
  }
  py::list at;
  for (const VrAtFar& v : r.at_far) {
    py::dict d;
    d["far_target"] = v.far_target;
    d["vr"] = v.vr;
    d["far"] = v.far;
    d["threshold"] = v.threshold;
    at.append(d);
  }
  py::dict out;
  out["threshold"] = thr;
  out["far"] = far;
  out["vr"] = vr;
  out["at_far"] = at;
  out["genuine"] = r.genuine;
  out["impostor"] = r.impostor;
  return out;
}

py::list sigma_list(const std::vector<VariancePoint>& curve) {
  py::list out;
  for (const VariancePoint& p : curve) out.append(py::make_tuple(p.dim, p.stats.intra, p.stats.inter));
  return out;
}

py::dict report_dict(const EvalReport& r) {
  py::dict out;
  out["rank1"] = r.rank1;
  out["roc"] = roc_dict(r.roc);
  out["sigma_curve"] = sigma_list(r.sigma_curve);
  out["sigma_intra"] = r.sigma_full.intra;
  out["sigma_inter"] = r.sigma_full.inter;
  out["correlation"] = r.correlation.values;
  out["correlation_cross_block"] = r.correlation_cross_block;
  out["probes"] = r.probes;
  out["gallery"] = r.gallery;
  return out;
}

py::dict parts_dict(const LogRecord& r) {
  py::dict d;
  d["iteration"] = r.iteration;
  d["loss"] = r.parts.total;
  d["relevance"] = r.parts.relevance;
  d["softmax"] = r.parts.softmax;
  d["r1"] = r.parts.r1;
  d["r2"] = r.parts.r2;
  d["ranking"] = r.parts.ranking;
  d["triplets"] = r.parts.triplets;
  d["lr"] = r.lr;
  d["lambda2"] = r.lambda2;
  return d;
}

// A trained model: the training state plus its log.
struct Model {
  TrainState state;
  std::vector<LogRecord> log;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Coupled deep learning for cross-modal embeddings";

  auto base = py::register_exception<Error>(m, "CdlError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  // linalg
  m.def("svd", [](const Matrix& a) {
    SvdResult r = svd(a);
    return py::make_tuple(r.u, r.s, r.vt);
  }, py::arg("m"), "Thin SVD (u, s, vt), singular values descending.");
  m.def("trace_norm", &trace_norm, py::arg("m"));
  m.def("psd_sqrt", &psd_sqrt, py::arg("a"), py::arg("mu") = 0.0);
  m.def("psd_inv_sqrt", &psd_inv_sqrt, py::arg("a"), py::arg("mu"));

  // config
  py::class_<Config>(m, "Config")
      .def(py::init<>())
      .def_static("parse", [](const std::string& text) { return parse_config(text, "<string>"); },
                  py::arg("text"))
      .def_static("load", &load_config, py::arg("path"))
      .def("set", [](Config& c, const std::string& key, const std::string& value) {
        apply_override(c, key, value);
      }, py::arg("key"), py::arg("value"))
      .def("get", [](const Config& c, const std::string& key) {
        for (const ConfigKey& k : config_schema()) {
          if (k.name == key) return k.get(c);
        }
        throw ConfigError("unknown config key '" + key + "'");
      }, py::arg("key"))
      .def("validate", [](const Config& c) { validate(c); })
      .def("to_text", &format_config)
      .def_static("keys", [] {
        std::vector<std::string> out;
        for (const ConfigKey& k : config_schema()) out.push_back(k.name);
        return out;
      })
      .def("__repr__", &format_config);

  // data
  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("features"), py::arg("labels"), py::arg("modalities"))
      .def_property_readonly("features", [](const Dataset& d) { return d.all().features; })
      .def_property_readonly("labels", [](const Dataset& d) { return d.all().labels; })
      .def_property_readonly("modalities", [](const Dataset& d) { return from_modalities(d.all().modalities); })
      .def_property_readonly("input_dim", &Dataset::input_dim)
      .def_property_readonly("identity_count", &Dataset::identity_count)
      .def("__len__", &Dataset::size)
      .def("save", [](const Dataset& d, const std::filesystem::path& p) { save_dataset(d, p); })
      .def_static("load", [](const std::filesystem::path& p) { return load_dataset(p); });

  m.def("generate", [](const Config& c) {
    validate(c);
    SyntheticData s = generate(c.synth_spec());
    py::dict out;
    out["train"] = std::move(s.train);
    out["gallery"] = std::move(s.gallery);
    out["probe"] = std::move(s.probe);
    out["oracle_raw_rank1"] = s.oracle.raw_rank1;
    out["oracle_latent_rank1"] = s.oracle.latent_rank1;
    return out;
  }, py::arg("config"), "Synthetic train, gallery and probe sets plus the generation oracle.");

  // coupling
  py::class_<CoupledHeads>(m, "CoupledHeads")
      .def_readwrite("w_n", &CoupledHeads::w_n)
      .def_readwrite("w_v", &CoupledHeads::w_v)
      .def_readwrite("gamma", &CoupledHeads::gamma)
      .def_property("lambda_", [](const CoupledHeads& h) { return h.params.lambda; },
                    [](CoupledHeads& h, double v) { h.params.lambda = v; })
      .def_property("alpha1", [](const CoupledHeads& h) { return h.params.alpha1; },
                    [](CoupledHeads& h, double v) { h.params.alpha1 = v; })
      .def_property("alpha2", [](const CoupledHeads& h) { return h.params.alpha2; },
                    [](CoupledHeads& h, double v) { h.params.alpha2 = v; })
      .def_property("mu", [](const CoupledHeads& h) { return h.params.mu; },
                    [](CoupledHeads& h, double v) { h.params.mu = v; })
      .def("refresh_gamma", [](CoupledHeads& h) { return refresh_gamma(h); })
      .def("update_gamma", &update_gamma)
      .def("r1_value", &r1_value)
      .def("r1_grads", [](const CoupledHeads& h) {
        HeadGrads g = r1_grads(h);
        return py::make_tuple(g.d_w_n, g.d_w_v);
      })
      .def("r2_value_and_grads", [](const CoupledHeads& h) {
        R2Result r = r2_value_and_grads(h);
        return py::make_tuple(r.value, r.d_w_n, r.d_w_v);
      })
      .def("softmax_loss", [](const CoupledHeads& h, const Matrix& emb, const std::vector<int>& labels,
                              const std::vector<int>& modalities) {
        SoftmaxResult r = softmax_loss(h, emb, labels, to_modalities(modalities));
        return py::make_tuple(r.loss, r.d_w_n, r.d_w_v, r.d_embeddings);
      }, py::arg("embeddings"), py::arg("labels"), py::arg("modalities"))
      .def("correlation_matrix", [](const CoupledHeads& h) { return correlation_matrix(h).values; })
      .def("cross_block_mean", [](const CoupledHeads& h) {
        return cross_block_mean(correlation_matrix(h));
      });

  m.def("init_heads", [](int m_dim, int classes, double lambda, double alpha1, double alpha2,
                         double mu, double init_std, std::uint64_t seed) {
    HeadsParams p;
    p.lambda = lambda;
    p.alpha1 = alpha1;
    p.alpha2 = alpha2;
    p.mu = mu;
    return init_heads(m_dim, classes, p, init_std, seed);
  }, py::arg("embedding_dim"), py::arg("classes"), py::arg("lambda_") = 1e-3,
     py::arg("alpha1") = 1.0, py::arg("alpha2") = 1.0, py::arg("mu") = 1e-6,
     py::arg("init_std") = 0.0, py::arg("seed") = 1);

  // ranking
  m.def("normalize_rows", &normalize_rows, py::arg("x"));
  m.def("mine_triplets", [](const Matrix& emb, const std::vector<int>& labels,
                            const std::vector<int>& modalities, double margin, std::size_t cap) {
    return triplets_to_matrix(mine_triplets(emb, labels, to_modalities(modalities), {margin, cap}));
  }, py::arg("embeddings"), py::arg("labels"), py::arg("modalities"), py::arg("margin") = 0.5,
     py::arg("max_per_anchor") = 4, "Rows of (anchor, positive, negative) batch indices.");
  m.def("triplet_loss", [](const Matrix& emb,
                           const Eigen::Matrix<long long, Eigen::Dynamic, 3, Eigen::RowMajor>& t,
                           double margin) {
    const std::vector<Triplet> ts = matrix_to_triplets(t);
    for (const Triplet& x : ts) {
      if (std::max({x.anchor, x.positive, x.negative}) >= std::size_t(emb.rows())) {
        throw DataError("triplet index out of range");
      }
    }
    TripletLossResult r = triplet_loss(emb, ts, margin);
    return py::make_tuple(r.loss, r.d_embeddings);
  }, py::arg("embeddings"), py::arg("triplets"), py::arg("margin") = 0.5);

  // eval
  m.def("score", [](const Matrix& probes, const std::vector<int>& pl, const Matrix& gallery,
                    const std::vector<int>& gl) { return score(probes, pl, gallery, gl).scores; },
        py::arg("probes"), py::arg("probe_labels"), py::arg("gallery"), py::arg("gallery_labels"));
  m.def("rank1", [](const Matrix& s, std::vector<int> pl, std::vector<int> gl) {
    return rank1({s, std::move(pl), std::move(gl)});
  }, py::arg("scores"), py::arg("probe_labels"), py::arg("gallery_labels"));
  m.def("roc", [](const Matrix& s, std::vector<int> pl, std::vector<int> gl,
                  const std::vector<double>& fars) {
    return roc_dict(roc({s, std::move(pl), std::move(gl)}, fars));
  }, py::arg("scores"), py::arg("probe_labels"), py::arg("gallery_labels"),
     py::arg("far_points") = std::vector<double>{0.001, 0.01, 0.1});
  m.def("variance_analysis", [](const Matrix& emb, const std::vector<int>& labels, const std::string& norm) {
    VarianceStats v = variance_analysis(emb, labels, parse_norm(norm));
    return py::make_tuple(v.intra, v.inter);
  }, py::arg("embeddings"), py::arg("labels"), py::arg("inter_norm") = "samples");
  m.def("variance_curve", [](const Matrix& emb, const std::vector<int>& labels,
                             const std::vector<int>& dims, const std::string& norm) {
    return sigma_list(variance_curve(emb, labels, dims, parse_norm(norm)));
  }, py::arg("embeddings"), py::arg("labels"), py::arg("dims"), py::arg("inter_norm") = "samples");

  // training
  py::class_<Model>(m, "Model")
      .def_property_readonly("iteration", [](const Model& x) { return x.state.iteration; })
      .def_property_readonly("heads", [](const Model& x) { return x.state.heads; })
      .def_property_readonly("log", [](const Model& x) {
        py::list out;
        for (const LogRecord& r : x.log) out.append(parts_dict(r));
        return out;
      })
      .def("embed", [](const Model& x, const Matrix& inputs) { return embed(x.state.net, inputs); },
           py::arg("inputs"))
      .def("evaluate", [](const Model& x, const Dataset& gallery, const Dataset& probe,
                          const Config& c) {
        return report_dict(evaluate_model(x.state.net, x.state.heads, gallery, probe, c.eval));
      }, py::arg("gallery"), py::arg("probe"), py::arg("config") = Config{})
      .def("save", [](const Model& x, const std::filesystem::path& p) { save_checkpoint(x.state, p); })
      .def("checkpoint_text", [](const Model& x) { return serialize_checkpoint(x.state); })
      .def_static("load", [](const std::filesystem::path& p) { return Model{load_checkpoint(p), {}}; });

  m.def("train", [](const Config& c, const Dataset& data) {
    validate(c);
    py::gil_scoped_release release;
    FitResult r = fit(data, c.layer_specs(data.input_dim()), c.train_config());
    return Model{std::move(r.state), std::move(r.log)};
  }, py::arg("config"), py::arg("train"));

  // command-line equivalents
  m.def("gen_data", [](const Config& c, const std::filesystem::path& out) {
    GenerationOracle o = cmd_gen_data(c, out);
    return py::make_tuple(o.raw_rank1, o.latent_rank1);
  }, py::arg("config"), py::arg("out_dir"));
  m.def("train_command", [](const Config& c, const std::filesystem::path& data_dir,
                            const std::filesystem::path& out,
                            std::optional<std::filesystem::path> resume) {
    py::gil_scoped_release release;
    cmd_train(c, data_dir, out, resume);
  }, py::arg("config"), py::arg("data_dir"), py::arg("out_dir"), py::arg("resume") = py::none());
  m.def("eval_command", [](const Config& c, const std::filesystem::path& ckpt,
                           const std::filesystem::path& gallery, const std::filesystem::path& probe,
                           const std::filesystem::path& out) {
    return report_dict(cmd_eval(c, ckpt, gallery, probe, out));
  }, py::arg("config"), py::arg("checkpoint"), py::arg("gallery"), py::arg("probe"),
     py::arg("out_dir"));
  m.def("diagnose_command", [](const Config& c, const std::filesystem::path& ckpt,
                               const std::filesystem::path& dataset,
                               const std::filesystem::path& out) {
    Diagnostics d = cmd_diagnose(c, ckpt, dataset, out);
    py::dict r;
    r["sigma_curve"] = sigma_list(d.sigma_curve);
    r["sigma_intra"] = d.sigma_full.intra;
    r["sigma_inter"] = d.sigma_full.inter;
    r["correlation"] = d.correlation.values;
    r["correlation_cross_block"] = d.correlation_cross_block;
    return r;
  }, py::arg("config"), py::arg("checkpoint"), py::arg("dataset"), py::arg("out_dir"));
}
