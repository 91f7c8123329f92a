#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mvhet/checkpoint.hpp"
#include "mvhet/errors.hpp"
#include "mvhet/evalkit.hpp"
#include "mvhet/ingest.hpp"
#include "mvhet/model.hpp"
#include "mvhet/toml.hpp"
#include "mvhet/trainer.hpp"
#include "mvhet/views.hpp"

namespace mvhet {

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  TaskKind task = TaskKind::NodeClassification;
  std::string target_type;      // classification
  std::string target_relation;  // link prediction
  double train_frac = 0.1, val_frac = 0.1, test_frac = 0.8;
  ModelConfig model;
  TrainConfig train;
  ProbeConfig probe;
  int cluster_restarts = 10;
  std::vector<std::pair<std::string, std::string>> metapaths;  // (name, chain text)
  bool synthetic = false;
  SyntheticSpec synth;
  std::uint64_t data_seed = 0;
  std::string manifest_path;
};

inline Fusion parse_fusion(const std::string& s) {
  if (s == "auto") return Fusion::Auto;
  if (s == "concat") return Fusion::Concat;
  if (s == "mean") return Fusion::Mean;
  if (s == "attn") return Fusion::Attention;
  throw Error(ErrorKind::UnknownVariant, "fusion '" + s + "'");
}

inline ExperimentConfig parse_experiment_config(const TomlValue& root,
                                                const std::string& base_dir) {
  static const TomlSchema schema = {
      {"", {"seed", "out"}},
      {"task", {"kind", "target", "relation", "train_frac", "val_frac", "test_frac"}},
      {"model",
       {"d_prime", "d_mid", "d", "ae_layers", "fusion", "use_transe", "use_autoencoders",
        "use_ortho_reg", "lambda", "ortho_coeff", "dropout"}},
      {"train",
       {"epochs", "patience", "lr", "neg_ratio", "beta1", "beta2", "eps", "probe_c",
        "probe_iterations"}},
      {"probe", {"proportions", "repeats", "c", "iterations"}},
      {"cluster", {"restarts"}},
      {"metapath[]", {"name", "path"}},
      {"data", {"kind", "seed"}},
      {"data.synthetic", {"classes", "intra", "inter", "noise", "separation"}},
      {"data.synthetic.types[]", {"name", "count", "dim"}},
      {"data.synthetic.relations[]", {"name", "src", "dst", "inverse", "intra", "inter"}},
      {"data.manifest", {"path"}},
  };
  check_toml_schema(root, schema);
  ExperimentConfig cfg;
  if (root.has("seed")) cfg.seed = static_cast<std::uint64_t>(root.at("seed").as_int());
  cfg.data_seed = cfg.seed;
  if (root.has("out")) cfg.out_dir = root.at("out").as_string();

  if (!root.has("task")) throw Error(ErrorKind::ConfigInvalid, "missing [task]");
  const TomlValue& task = root.at("task");
  const std::string kind = task.at("kind").as_string();
  if (kind == "classification") {
    cfg.task = TaskKind::NodeClassification;
    cfg.target_type = task.at("target").as_string();
  } else if (kind == "link") {
    cfg.task = TaskKind::LinkPrediction;
    cfg.target_relation = task.at("relation").as_string();
    cfg.train_frac = 0.2;  // the low-training-ratio link protocol
    cfg.val_frac = 0.1;
    cfg.test_frac = 0.7;
  } else {
    throw Error(ErrorKind::ConfigInvalid, "task.kind must be classification or link");
  }
  if (task.has("train_frac")) cfg.train_frac = task.at("train_frac").as_number();
  if (task.has("val_frac")) cfg.val_frac = task.at("val_frac").as_number();
  if (task.has("test_frac")) cfg.test_frac = task.at("test_frac").as_number();
  check_fractions(cfg.train_frac, cfg.val_frac, cfg.test_frac);

  if (root.has("model")) {
    const TomlValue& m = root.at("model");
    if (m.has("d_prime")) cfg.model.d_prime = static_cast<int>(m.at("d_prime").as_int());
    if (m.has("d_mid")) cfg.model.d_mid = static_cast<int>(m.at("d_mid").as_int());
    if (m.has("d")) cfg.model.d = static_cast<int>(m.at("d").as_int());
    if (m.has("ae_layers")) cfg.model.ae_layers = static_cast<int>(m.at("ae_layers").as_int());
    if (m.has("fusion")) cfg.model.fusion = parse_fusion(m.at("fusion").as_string());
    if (m.has("use_transe")) cfg.model.use_transe = m.at("use_transe").as_bool();
    if (m.has("use_autoencoders"))
      cfg.model.use_autoencoders = m.at("use_autoencoders").as_bool();
    if (m.has("use_ortho_reg")) cfg.model.use_ortho_reg = m.at("use_ortho_reg").as_bool();
    if (m.has("lambda")) cfg.model.lambda = m.at("lambda").as_number();
    if (m.has("ortho_coeff")) cfg.model.ortho_coeff = m.at("ortho_coeff").as_number();
    if (m.has("dropout")) cfg.model.dropout = m.at("dropout").as_number();
  }
  cfg.model.validate();

  if (root.has("train")) {
    const TomlValue& t = root.at("train");
    if (t.has("epochs")) cfg.train.epochs = static_cast<int>(t.at("epochs").as_int());
    if (t.has("patience")) cfg.train.patience = static_cast<int>(t.at("patience").as_int());
    if (t.has("lr")) cfg.train.lr = t.at("lr").as_number();
    if (t.has("neg_ratio")) cfg.train.neg_ratio = static_cast<int>(t.at("neg_ratio").as_int());
    if (t.has("beta1")) cfg.train.beta1 = t.at("beta1").as_number();
    if (t.has("beta2")) cfg.train.beta2 = t.at("beta2").as_number();
    if (t.has("eps")) cfg.train.eps = t.at("eps").as_number();
    if (t.has("probe_c")) cfg.train.probe_c = t.at("probe_c").as_number();
    if (t.has("probe_iterations"))
      cfg.train.probe_iterations = static_cast<int>(t.at("probe_iterations").as_int());
  }
  cfg.train.seed = cfg.seed;
  cfg.train.validate();

  if (root.has("probe")) {
    const TomlValue& p = root.at("probe");
    if (p.has("proportions")) {
      cfg.probe.proportions.clear();
      for (const TomlValue& v : p.at("proportions").array)
        cfg.probe.proportions.push_back(v.as_number());
    }
    if (p.has("repeats")) cfg.probe.repeats = static_cast<int>(p.at("repeats").as_int());
    if (p.has("c")) cfg.probe.c = p.at("c").as_number();
    if (p.has("iterations")) cfg.probe.iterations = static_cast<int>(p.at("iterations").as_int());
  }
  cfg.probe.seed = cfg.seed;
  cfg.probe.validate();
  if (root.has("cluster"))
    cfg.cluster_restarts = static_cast<int>(root.at("cluster").at("restarts").as_int());

  if (!root.has("metapath") || root.at("metapath").array.empty())
    throw Error(ErrorKind::ConfigInvalid, "at least one [[metapath]] is required");
  for (const TomlValue& mp : root.at("metapath").array)
    cfg.metapaths.emplace_back(mp.at("name").as_string(), mp.at("path").as_string());

  if (!root.has("data")) throw Error(ErrorKind::ConfigInvalid, "missing [data]");
  const TomlValue& data = root.at("data");
  if (data.has("seed")) cfg.data_seed = static_cast<std::uint64_t>(data.at("seed").as_int());
  const std::string dkind = data.at("kind").as_string();
  if (dkind == "synthetic") {
    cfg.synthetic = true;
    if (!data.has("synthetic"))
      throw Error(ErrorKind::ConfigInvalid, "data.kind=synthetic needs [data.synthetic]");
    const TomlValue& s = data.at("synthetic");
    if (s.has("classes")) cfg.synth.classes = static_cast<int>(s.at("classes").as_int());
    if (s.has("intra")) cfg.synth.intra = s.at("intra").as_number();
    if (s.has("inter")) cfg.synth.inter = s.at("inter").as_number();
    if (s.has("noise")) cfg.synth.noise = s.at("noise").as_number();
    if (s.has("separation")) cfg.synth.separation = s.at("separation").as_number();
    if (!s.has("types")) throw Error(ErrorKind::ConfigInvalid, "[data.synthetic] needs types");
    for (const TomlValue& t : s.at("types").array)
      cfg.synth.types.push_back(SynthType{t.at("name").as_string(),
                                          static_cast<int>(t.at("count").as_int()),
                                          static_cast<int>(t.at("dim").as_int())});
    if (s.has("relations"))
      for (const TomlValue& r : s.at("relations").array) {
        SynthRelation rel{r.at("name").as_string(), r.at("src").as_string(),
                          r.at("dst").as_string(), r.at("inverse").as_string()};
        if (r.has("intra")) rel.intra = r.at("intra").as_number();
        if (r.has("inter")) rel.inter = r.at("inter").as_number();
        cfg.synth.relations.push_back(rel);
      }
    cfg.synth.validate();
  } else if (dkind == "manifest") {
    cfg.synthetic = false;
    if (!data.has("manifest"))
      throw Error(ErrorKind::ConfigInvalid, "data.kind=manifest needs [data.manifest]");
    std::filesystem::path p = data.at("manifest").at("path").as_string();
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    cfg.manifest_path = p.string();
  } else {
    throw Error(ErrorKind::ConfigInvalid, "data.kind must be synthetic or manifest");
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  TomlValue root = parse_toml_file(path);
  std::string dir = std::filesystem::path(path).parent_path().string();
  if (dir.empty()) dir = ".";
  return parse_experiment_config(root, dir);
}

// Materialized data for one experiment: the full graph, the message-passing
// graph (val/test links hidden for link tasks), splits, and validated views.
struct ExperimentData {
  HeteroGraph graph;
  HeteroGraph train_graph;
  std::vector<std::vector<std::string>> ids;  // per type, dense index -> display id
  std::vector<Metapath> paths;
  // classification
  NodeTypeId target = -1;
  Split split;
  int num_classes = 0;
  // link prediction
  NodeTypeId u_type = -1, a_type = -1;
  LinkSplit links;
};

inline ExperimentData prepare_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  if (cfg.synthetic) {
    data.graph = generate_synthetic(cfg.synth, cfg.data_seed);
    for (const NodeType& t : data.graph.types()) {
      std::vector<std::string> names;
      names.reserve(t.count);
      for (int i = 0; i < t.count; ++i) names.push_back(t.name + std::to_string(i));
      data.ids.push_back(std::move(names));
    }
  } else {
    DatasetManifest manifest = parse_manifest(cfg.manifest_path);
    manifest.train_frac = cfg.train_frac;
    manifest.val_frac = cfg.val_frac;
    manifest.test_frac = cfg.test_frac;
    manifest.seed = cfg.seed;
    LoadedDataset loaded = load_dataset(manifest);
    data.graph = std::move(loaded.graph);
    data.ids = std::move(loaded.ids);
    if (cfg.task == TaskKind::NodeClassification) data.split = std::move(loaded.split);
  }

  if (cfg.task == TaskKind::NodeClassification) {
    data.target = data.graph.type_id(cfg.target_type);
    const auto& labels = data.graph.labels(data.target);
    if (!labels.has_value())
      throw Error(ErrorKind::MissingLabels, cfg.target_type + " has no labels");
    int max_label = -1;
    std::vector<int> labeled;
    for (std::size_t i = 0; i < labels->size(); ++i) {
      if ((*labels)[i] >= 0) {
        labeled.push_back(static_cast<int>(i));
        max_label = std::max(max_label, (*labels)[i]);
      }
    }
    data.num_classes = max_label + 1;
    if (cfg.synthetic)
      data.split = make_split(labeled, cfg.train_frac, cfg.val_frac, cfg.test_frac, cfg.seed);
    data.train_graph = data.graph;
  } else {
    const RelationTypeId rel = data.graph.relation_id(cfg.target_relation);
    data.u_type = data.graph.relation(rel).src_type;
    data.a_type = data.graph.relation(rel).dst_type;
    data.links =
        make_link_split(data.graph, rel, cfg.train_frac, cfg.val_frac, cfg.test_frac, cfg.seed);
    data.train_graph = restrict_relation(data.graph, rel, data.links.train_pos);
  }

  for (const auto& [name, text] : cfg.metapaths)
    data.paths.push_back(parse_metapath(data.train_graph, name, text));
  if (cfg.task == TaskKind::NodeClassification) {
    for (const Metapath& p : data.paths)
      if (p.target_type() != data.target)
        throw Error(ErrorKind::TypeMismatch,
                    p.name + " does not end at target type " + cfg.target_type);
  }
  return data;
}

inline MvHetModel build_model(const ExperimentConfig& cfg, const ExperimentData& data) {
  std::vector<ViewPlan> plans;
  plans.reserve(data.paths.size());
  for (const Metapath& p : data.paths) plans.push_back(compile_view(data.train_graph, p));
  const int classes = cfg.task == TaskKind::NodeClassification ? data.num_classes : 0;
  return MvHetModel(data.train_graph, std::move(plans), cfg.model, classes, cfg.seed);
}

inline TrainTask make_task(const ExperimentConfig& cfg, const ExperimentData& data) {
  TrainTask task;
  task.kind = cfg.task;
  if (cfg.task == TaskKind::NodeClassification) {
    task.target_type = data.target;
    task.split = data.split;
    task.num_classes = data.num_classes;
  } else {
    task.u_type = data.u_type;
    task.a_type = data.a_type;
    task.links = data.links;
  }
  return task;
}

// ---------------------------------------------------------------------------
// Metrics tables (CSV + pretty text, deterministic formatting)

struct MetricsTable {
  TaskKind kind = TaskKind::NodeClassification;
  std::vector<ProbeRow> probe;  // classification: per training proportion
  double nmi = 0.0, ari = 0.0;
  double auc = 0.0, ap = 0.0;
};

inline std::string metrics_to_csv(const MetricsTable& m) {
  std::ostringstream out;
  out << std::setprecision(17);
  if (m.kind == TaskKind::NodeClassification) {
    out << "metric,proportion,value\n";
    for (const ProbeRow& r : m.probe) {
      out << "macro_f1," << r.proportion << ',' << r.macro_f1 << '\n';
      out << "micro_f1," << r.proportion << ',' << r.micro_f1 << '\n';
    }
    out << "nmi,," << m.nmi << '\n';
    out << "ari,," << m.ari << '\n';
  } else {
    out << "metric,value\n";
    out << "auc," << m.auc << '\n';
    out << "ap," << m.ap << '\n';
  }
  return out.str();
}

inline std::string metrics_pretty(const MetricsTable& m) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  if (m.kind == TaskKind::NodeClassification) {
    out << "train%   macro-f1   micro-f1\n";
    for (const ProbeRow& r : m.probe)
      out << std::setw(5) << static_cast<int>(r.proportion * 100 + 0.5) << "%   " << std::setw(8)
          << r.macro_f1 << "   " << std::setw(8) << r.micro_f1 << '\n';
    out << "\nclustering:  NMI " << m.nmi << "   ARI " << m.ari << '\n';
  } else {
    out << "link prediction:  AUC " << m.auc << "   AP " << m.ap << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Commands

inline Mat eval_embeddings(MvHetModel& model, NodeTypeId type) {
  Tape tape;
  ModelForward fwd = model.forward(tape, false, 0);
  return fwd.fused[model.group_of_type(type)].val();
}

inline MetricsTable evaluate_model(const ExperimentConfig& cfg, const ExperimentData& data,
                                   MvHetModel& model) {
  MetricsTable table;
  table.kind = cfg.task;
  if (cfg.task == TaskKind::NodeClassification) {
    const Mat h = eval_embeddings(model, data.target);
    const auto& labels = *data.graph.labels(data.target);
    // SVM probe on test-split embeddings, the varying-proportion protocol
    Mat h_test(static_cast<int>(data.split.test.size()), h.cols());
    std::vector<int> y_test;
    for (std::size_t i = 0; i < data.split.test.size(); ++i) {
      for (int j = 0; j < h.cols(); ++j) h_test(static_cast<int>(i), j) = h(data.split.test[i], j);
      y_test.push_back(labels[data.split.test[i]]);
    }
    ProbeConfig probe = cfg.probe;
    table.probe = svm_probe(h_test, y_test, probe);
    // k-means over all labeled nodes
    std::vector<int> labeled;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] >= 0) labeled.push_back(static_cast<int>(i));
    Mat h_lab(static_cast<int>(labeled.size()), h.cols());
    std::vector<int> y_lab;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      for (int j = 0; j < h.cols(); ++j) h_lab(static_cast<int>(i), j) = h(labeled[i], j);
      y_lab.push_back(labels[labeled[i]]);
    }
    KmeansResult km =
        kmeans_cluster(h_lab, data.num_classes, cfg.cluster_restarts, y_lab, cfg.seed);
    table.nmi = km.nmi;
    table.ari = km.ari;
  } else {
    Tape tape;
    ModelForward fwd = model.forward(tape, false, 0);
    std::vector<std::pair<int, int>> all = data.links.test_pos;
    all.insert(all.end(), data.links.test_neg.begin(), data.links.test_neg.end());
    std::vector<int> y(data.links.test_pos.size(), 1);
    y.resize(all.size(), 0);
    Tensor probs = model.score_links(tape, fwd, data.u_type, data.a_type, all);
    std::vector<double> s(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) s[i] = probs.val()(static_cast<int>(i), 0);
    RankMetrics rm = rank_metrics(s, y);
    table.auc = rm.auc;
    table.ap = rm.ap;
  }
  return table;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << content;
}

inline void cmd_train(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  ExperimentData data = prepare_data(cfg);
  MvHetModel model = build_model(cfg, data);
  TrainReport report = train(model, make_task(cfg, data), cfg.train);
  fs::create_directories(cfg.out_dir);
  write_report_csv(report, (fs::path(cfg.out_dir) / "report.csv").string());
  save_checkpoint(model.params(), (fs::path(cfg.out_dir) / "checkpoint.json").string());
}

inline MetricsTable cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint) {
  namespace fs = std::filesystem;
  ExperimentData data = prepare_data(cfg);
  MvHetModel model = build_model(cfg, data);
  load_checkpoint(model.params(), checkpoint);
  MetricsTable table = evaluate_model(cfg, data, model);
  fs::create_directories(cfg.out_dir);
  write_text_file((fs::path(cfg.out_dir) / "metrics.csv").string(), metrics_to_csv(table));
  write_text_file((fs::path(cfg.out_dir) / "metrics.txt").string(), metrics_pretty(table));
  return table;
}

inline void cmd_embed(const ExperimentConfig& cfg, const std::string& checkpoint) {
  namespace fs = std::filesystem;
  ExperimentData data = prepare_data(cfg);
  MvHetModel model = build_model(cfg, data);
  load_checkpoint(model.params(), checkpoint);
  fs::create_directories(cfg.out_dir);
  for (NodeTypeId t : model.groups()) {
    const Mat h = eval_embeddings(model, t);
    const std::string& tname = data.graph.type(t).name;
    std::ofstream out(fs::path(cfg.out_dir) / ("embeddings_" + tname + ".tsv"));
    if (!out) throw Error(ErrorKind::IoError, "cannot write embeddings for " + tname);
    out << std::setprecision(17);
    out << "node_id";
    for (int j = 0; j < h.cols(); ++j) out << "\tf" << j;
    out << '\n';
    for (int i = 0; i < h.rows(); ++i) {
      out << data.ids[t][i];
      for (int j = 0; j < h.cols(); ++j) out << '\t' << h(i, j);
      out << '\n';
    }
  }
}

struct AblateRow {
  std::string variant;
  MetricsTable metrics;
};

inline ExperimentConfig apply_variant(ExperimentConfig cfg, const std::string& name) {
  cfg.model.fusion = Fusion::Auto;
  cfg.model.use_transe = true;
  cfg.model.use_autoencoders = true;
  cfg.model.use_ortho_reg = true;
  if (name == "auto") {
  } else if (name == "mean" || name == "concat" || name == "attn") {
    cfg.model.fusion = parse_fusion(name);
  } else if (name == "no_transe") {
    cfg.model.use_transe = false;
  } else if (name == "no_ae") {
    cfg.model.use_autoencoders = false;
  } else if (name == "no_reg") {
    cfg.model.use_ortho_reg = false;
  } else {
    throw Error(ErrorKind::UnknownVariant, name);
  }
  return cfg;
}

// Runs every variant with the same seed and data so differences are
// attributable to the variant switch alone.
inline std::vector<AblateRow> cmd_ablate(const ExperimentConfig& cfg,
                                         const std::vector<std::string>& variants) {
  namespace fs = std::filesystem;
  std::vector<AblateRow> rows;
  for (const std::string& name : variants) {
    ExperimentConfig vcfg = apply_variant(cfg, name);
    ExperimentData data = prepare_data(vcfg);
    MvHetModel model = build_model(vcfg, data);
    train(model, make_task(vcfg, data), vcfg.train);
    rows.push_back(AblateRow{name, evaluate_model(vcfg, data, model)});
  }
  std::ostringstream csv, pretty;
  csv << std::setprecision(17);
  pretty << std::fixed << std::setprecision(4);
  if (cfg.task == TaskKind::NodeClassification) {
    csv << "variant,macro_f1,micro_f1,nmi,ari\n";
    pretty << "variant      macro-f1   micro-f1      NMI      ARI\n";
    for (const AblateRow& r : rows) {
      double macro = 0, micro = 0;
      for (const ProbeRow& p : r.metrics.probe) macro += p.macro_f1, micro += p.micro_f1;
      macro /= r.metrics.probe.size();
      micro /= r.metrics.probe.size();
      csv << r.variant << ',' << macro << ',' << micro << ',' << r.metrics.nmi << ','
          << r.metrics.ari << '\n';
      pretty << std::setw(10) << r.variant << "   " << std::setw(8) << macro << "   "
             << std::setw(8) << micro << "   " << std::setw(6) << r.metrics.nmi << "   "
             << std::setw(6) << r.metrics.ari << '\n';
    }
  } else {
    csv << "variant,auc,ap\n";
    pretty << "variant         AUC        AP\n";
    for (const AblateRow& r : rows) {
      csv << r.variant << ',' << r.metrics.auc << ',' << r.metrics.ap << '\n';
      pretty << std::setw(10) << r.variant << "   " << std::setw(8) << r.metrics.auc << "   "
             << std::setw(8) << r.metrics.ap << '\n';
    }
  }
  fs::create_directories(cfg.out_dir);
  write_text_file((fs::path(cfg.out_dir) / "ablation.csv").string(), csv.str());
  write_text_file((fs::path(cfg.out_dir) / "ablation.txt").string(), pretty.str());
  return rows;
}

inline void cmd_gensynth(const ExperimentConfig& cfg) {
  if (!cfg.synthetic)
    throw Error(ErrorKind::ConfigInvalid, "gen-synth needs data.kind = synthetic");
  HeteroGraph g = generate_synthetic(cfg.synth, cfg.data_seed);
  const std::string label_type =
      cfg.task == TaskKind::NodeClassification ? cfg.target_type : std::string();
  write_dataset(g, cfg.out_dir, label_type, cfg.train_frac, cfg.val_frac, cfg.test_frac,
                cfg.seed);
}

}  // namespace mvhet
