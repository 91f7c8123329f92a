#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mvhet/errors.hpp"
#include "mvhet/hetgraph.hpp"
#include "mvhet/rng.hpp"
#include "mvhet/toml.hpp"

namespace mvhet {

struct Split {
  std::vector<int> train, val, test;
};

inline void check_fractions(double train, double val, double test) {
  if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9)
    throw Error(ErrorKind::ManifestInvalid, "split fractions must be >=0 and sum to 1");
}

// Deterministic shuffle-and-cut split of the given ids. Train and val get
// floor(frac*n); test takes the remainder.
inline Split make_split(std::vector<int> ids, double train_frac, double val_frac,
                        double test_frac, std::uint64_t seed) {
  check_fractions(train_frac, val_frac, test_frac);
  Rng rng = keyed_rng(seed, "split");
  for (std::size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[rng.below(i)]);
  const std::size_t n = ids.size();
  const std::size_t n_train = static_cast<std::size_t>(train_frac * n);
  const std::size_t n_val = static_cast<std::size_t>(val_frac * n);
  Split s;
  s.train.assign(ids.begin(), ids.begin() + n_train);
  s.val.assign(ids.begin() + n_train, ids.begin() + std::min(n, n_train + n_val));
  s.test.assign(ids.begin() + std::min(n, n_train + n_val), ids.end());
  return s;
}

// ---------------------------------------------------------------------------
// Manifest-driven loading from TSV files

enum class FeatureEncoding { Dense, OneHotFromId, BagOfWords };

struct ManifestNode {
  std::string type;
  std::string file;
  FeatureEncoding features = FeatureEncoding::Dense;
  int dim = -1;          // required for bow; inferred for dense; = count for onehot
  std::string bow_file;  // sparse (id, index, value) triplets
};

struct ManifestEdge {
  std::string name, src, dst, file, inverse;
};

struct DatasetManifest {
  std::string root;  // directory containing the data files
  std::vector<ManifestNode> nodes;
  std::vector<ManifestEdge> edges;
  std::string label_type, label_file;  // empty when unlabeled
  double train_frac = 0.1, val_frac = 0.1, test_frac = 0.8;
  std::uint64_t seed = 0;
};

inline DatasetManifest parse_manifest(const std::string& path) {
  static const TomlSchema schema = {
      {"", {"seed"}},
      {"split", {"train", "val", "test"}},
      {"labels", {"type", "file"}},
      {"nodes[]", {"type", "file", "features", "dim", "bow_file"}},
      {"edges[]", {"name", "src", "dst", "file", "inverse"}},
  };
  TomlValue root = parse_toml_file(path);
  try {
    check_toml_schema(root, schema);
  } catch (const Error& e) {
    throw Error(ErrorKind::ManifestInvalid, std::string(e.what()) + " in " + path);
  }
  DatasetManifest m;
  m.root = std::filesystem::path(path).parent_path().string();
  if (m.root.empty()) m.root = ".";
  if (root.has("seed")) m.seed = static_cast<std::uint64_t>(root.at("seed").as_int());
  if (root.has("split")) {
    const TomlValue& s = root.at("split");
    m.train_frac = s.at("train").as_number();
    m.val_frac = s.at("val").as_number();
    m.test_frac = s.at("test").as_number();
  }
  if (!root.has("nodes") || root.at("nodes").array.empty())
    throw Error(ErrorKind::ManifestInvalid, "manifest declares no node types");
  for (const TomlValue& n : root.at("nodes").array) {
    ManifestNode mn;
    mn.type = n.at("type").as_string();
    mn.file = n.at("file").as_string();
    if (n.has("features")) {
      const std::string& f = n.at("features").as_string();
      if (f == "dense") mn.features = FeatureEncoding::Dense;
      else if (f == "onehot") mn.features = FeatureEncoding::OneHotFromId;
      else if (f == "bow") mn.features = FeatureEncoding::BagOfWords;
      else throw Error(ErrorKind::ManifestInvalid, "unknown feature encoding '" + f + "'");
    }
    if (n.has("dim")) mn.dim = static_cast<int>(n.at("dim").as_int());
    if (n.has("bow_file")) mn.bow_file = n.at("bow_file").as_string();
    if (mn.features == FeatureEncoding::BagOfWords && (mn.dim <= 0 || mn.bow_file.empty()))
      throw Error(ErrorKind::ManifestInvalid, "bow features need dim and bow_file");
    m.nodes.push_back(std::move(mn));
  }
  if (root.has("edges"))
    for (const TomlValue& e : root.at("edges").array)
      m.edges.push_back(ManifestEdge{e.at("name").as_string(), e.at("src").as_string(),
                                     e.at("dst").as_string(), e.at("file").as_string(),
                                     e.at("inverse").as_string()});
  if (root.has("labels")) {
    m.label_type = root.at("labels").at("type").as_string();
    m.label_file = root.at("labels").at("file").as_string();
  }
  check_fractions(m.train_frac, m.val_frac, m.test_frac);
  return m;
}

struct LoadedDataset {
  HeteroGraph graph;
  Split split;                                // over labeled nodes of the label type
  std::vector<std::vector<std::string>> ids;  // per type: dense index -> file id
};

namespace ingest_detail {

inline std::vector<std::vector<std::string>> read_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == '\t') {
        fields.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(std::move(cur));
    rows.push_back(std::move(fields));
  }
  return rows;
}

inline double parse_double(const std::string& s, long line, long col) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == nullptr || *end != '\0' || s.empty())
    throw Error(ErrorKind::ParseError, "bad number '" + s + "'", line, col);
  return v;
}

inline long parse_int(const std::string& s, long line, long col) {
  char* end = nullptr;
  long v = std::strtol(s.c_str(), &end, 10);
  if (end == nullptr || *end != '\0' || s.empty())
    throw Error(ErrorKind::ParseError, "bad integer '" + s + "'", line, col);
  return v;
}

}  // namespace ingest_detail

inline LoadedDataset load_dataset(const DatasetManifest& m) {
  using namespace ingest_detail;
  namespace fs = std::filesystem;
  GraphBuilder builder;
  std::vector<std::unordered_map<std::string, int>> id_map;
  LoadedDataset out;

  struct PendingType {
    std::vector<std::vector<std::string>> rows;
    int dim = 0;
  };
  std::vector<PendingType> pending;
  for (const ManifestNode& n : m.nodes) {
    PendingType pt;
    pt.rows = read_tsv((fs::path(m.root) / n.file).string());
    const int count = static_cast<int>(pt.rows.size());
    int dim = n.dim;
    if (n.features == FeatureEncoding::Dense) {
      const int inferred = pt.rows.empty() ? std::max(0, dim) : static_cast<int>(pt.rows[0].size()) - 1;
      if (dim < 0) dim = inferred;
      if (dim != inferred)
        throw Error(ErrorKind::ManifestInvalid,
                    n.type + ": declared dim " + std::to_string(n.dim) + " != file dim " +
                        std::to_string(inferred));
    } else if (n.features == FeatureEncoding::OneHotFromId) {
      dim = count;
    }
    pt.dim = dim;
    builder.add_node_type(n.type, count, dim);
    std::unordered_map<std::string, int> ids;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < pt.rows.size(); ++i) {
      const std::string& id = pt.rows[i][0];
      if (!ids.emplace(id, static_cast<int>(i)).second)
        throw Error(ErrorKind::ParseError, n.file + ": duplicate id '" + id + "'",
                    static_cast<long>(i + 1), 1);
      names.push_back(id);
    }
    id_map.push_back(std::move(ids));
    out.ids.push_back(std::move(names));
    pending.push_back(std::move(pt));
  }

  // features after all types are declared
  GraphBuilder& b = builder;
  for (std::size_t ti = 0; ti < m.nodes.size(); ++ti) {
    const ManifestNode& n = m.nodes[ti];
    const PendingType& pt = pending[ti];
    const int count = static_cast<int>(pt.rows.size());
    Mat x(count, pt.dim);
    if (n.features == FeatureEncoding::Dense) {
      for (int i = 0; i < count; ++i) {
        if (static_cast<int>(pt.rows[i].size()) != pt.dim + 1)
          throw Error(ErrorKind::ParseError, n.file + ": ragged row", i + 1,
                      static_cast<long>(pt.rows[i].size()));
        for (int j = 0; j < pt.dim; ++j)
          x(i, j) = parse_double(pt.rows[i][j + 1], i + 1, j + 2);
      }
    } else if (n.features == FeatureEncoding::OneHotFromId) {
      for (int i = 0; i < count; ++i) x(i, i) = 1.0;
    } else {
      auto rows = read_tsv((fs::path(m.root) / n.bow_file).string());
      for (std::size_t li = 0; li < rows.size(); ++li) {
        if (rows[li].size() != 3)
          throw Error(ErrorKind::ParseError, n.bow_file + ": expected 3 fields",
                      static_cast<long>(li + 1), static_cast<long>(rows[li].size()));
        auto it = id_map[ti].find(rows[li][0]);
        if (it == id_map[ti].end())
          throw Error(ErrorKind::ParseError, n.bow_file + ": unknown id '" + rows[li][0] + "'",
                      static_cast<long>(li + 1), 1);
        const long j = parse_int(rows[li][1], static_cast<long>(li + 1), 2);
        if (j < 0 || j >= pt.dim)
          throw Error(ErrorKind::ParseError, n.bow_file + ": feature index out of range",
                      static_cast<long>(li + 1), 2);
        x(it->second, static_cast<int>(j)) =
            parse_double(rows[li][2], static_cast<long>(li + 1), 3);
      }
    }
    b.set_features(static_cast<NodeTypeId>(ti), std::move(x));
  }

  auto type_index = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < m.nodes.size(); ++i)
      if (m.nodes[i].type == name) return static_cast<int>(i);
    throw Error(ErrorKind::UnknownType, name);
  };

  for (const ManifestEdge& e : m.edges) {
    const int src = type_index(e.src);
    const int dst = type_index(e.dst);
    auto [fwd, inv] = builder.add_relation(e.name, src, dst, e.inverse);
    (void)inv;
    auto rows = read_tsv((fs::path(m.root) / e.file).string());
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(rows.size());
    for (std::size_t li = 0; li < rows.size(); ++li) {
      if (rows[li].size() != 2)
        throw Error(ErrorKind::ParseError, e.file + ": expected 2 fields",
                    static_cast<long>(li + 1), static_cast<long>(rows[li].size()));
      auto u = id_map[src].find(rows[li][0]);
      if (u == id_map[src].end())
        throw Error(ErrorKind::ParseError, e.file + ": unknown " + e.src + " id '" + rows[li][0] +
                        "'", static_cast<long>(li + 1), 1);
      auto v = id_map[dst].find(rows[li][1]);
      if (v == id_map[dst].end())
        throw Error(ErrorKind::ParseError, e.file + ": unknown " + e.dst + " id '" + rows[li][1] +
                        "'", static_cast<long>(li + 1), 2);
      pairs.emplace_back(u->second, v->second);
    }
    builder.add_edges(fwd, pairs);
  }

  std::vector<int> labeled;
  if (!m.label_type.empty()) {
    const int ti = type_index(m.label_type);
    std::vector<int> labels(pending[ti].rows.size(), -1);
    auto rows = read_tsv((fs::path(m.root) / m.label_file).string());
    for (std::size_t li = 0; li < rows.size(); ++li) {
      if (rows[li].size() != 2)
        throw Error(ErrorKind::ParseError, m.label_file + ": expected 2 fields",
                    static_cast<long>(li + 1), static_cast<long>(rows[li].size()));
      auto it = id_map[ti].find(rows[li][0]);
      if (it == id_map[ti].end())
        throw Error(ErrorKind::ParseError, m.label_file + ": unknown id '" + rows[li][0] + "'",
                    static_cast<long>(li + 1), 1);
      labels[it->second] =
          static_cast<int>(parse_int(rows[li][1], static_cast<long>(li + 1), 2));
    }
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] >= 0) labeled.push_back(static_cast<int>(i));
    builder.set_labels(ti, std::move(labels));
  }

  out.graph = builder.build();
  out.split = make_split(labeled, m.train_frac, m.val_frac, m.test_frac, m.seed);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic planted-partition generator

struct SynthType {
  std::string name;
  int count = 0;
  int dim = 0;
};

struct SynthRelation {
  std::string name, src, dst, inverse;
  double intra = -1.0;  // negative: inherit the spec-wide probability
  double inter = -1.0;
};

struct SyntheticSpec {
  int classes = 2;
  double intra = 0.1;       // same-class edge probability
  double inter = 0.01;      // cross-class edge probability
  double noise = 1.0;       // feature noise sigma
  double separation = 1.0;  // class centroid scale
  std::vector<SynthType> types;
  std::vector<SynthRelation> relations;

  void validate() const {
    if (classes < 2) throw Error(ErrorKind::SpecInvalid, "classes must be >= 2");
    if (intra < 0 || intra > 1 || inter < 0 || inter > 1)
      throw Error(ErrorKind::SpecInvalid, "edge probabilities must be in [0,1]");
    if (noise < 0) throw Error(ErrorKind::SpecInvalid, "noise must be >= 0");
    if (types.empty()) throw Error(ErrorKind::SpecInvalid, "no node types");
    for (const SynthType& t : types) {
      if (t.count <= 0) throw Error(ErrorKind::SpecInvalid, t.name + ": count must be > 0");
      if (t.dim < classes)
        throw Error(ErrorKind::SpecInvalid,
                    t.name + ": feature dim must be >= classes for planted centroids");
    }
    for (const SynthRelation& r : relations) {
      auto known = [&](const std::string& n) {
        for (const SynthType& t : types)
          if (t.name == n) return true;
        return false;
      };
      if (!known(r.src) || !known(r.dst))
        throw Error(ErrorKind::SpecInvalid, r.name + ": unknown endpoint type");
      if (r.intra > 1.0 || r.inter > 1.0)
        throw Error(ErrorKind::SpecInvalid, r.name + ": edge probabilities must be in [0,1]");
    }
  }
};

// Planted partition: every type's nodes get a class; same-class pairs link
// with `intra`, cross-class with `inter`; features are a scaled one-hot
// class centroid plus Gaussian noise.
inline HeteroGraph generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  GraphBuilder builder;
  std::vector<std::vector<int>> classes_of(spec.types.size());
  for (std::size_t ti = 0; ti < spec.types.size(); ++ti) {
    const SynthType& t = spec.types[ti];
    builder.add_node_type(t.name, t.count, t.dim);
    Rng lrng = keyed_rng(seed, "labels", ti);
    std::vector<int>& cls = classes_of[ti];
    cls.resize(t.count);
    for (int i = 0; i < t.count; ++i) cls[i] = static_cast<int>(lrng.below(spec.classes));
    Rng frng = keyed_rng(seed, "features", ti);
    Mat x(t.count, t.dim);
    // centroid of class c lights up every coordinate j with j % classes == c
    for (int i = 0; i < t.count; ++i)
      for (int j = 0; j < t.dim; ++j)
        x(i, j) = (j % spec.classes == cls[i] ? spec.separation : 0.0) +
                  spec.noise * frng.normal();
    builder.set_features(static_cast<NodeTypeId>(ti), std::move(x));
    builder.set_labels(static_cast<NodeTypeId>(ti), cls);
  }
  auto index_of = [&](const std::string& n) {
    for (std::size_t i = 0; i < spec.types.size(); ++i)
      if (spec.types[i].name == n) return static_cast<int>(i);
    throw Error(ErrorKind::SpecInvalid, "unknown type " + n);
  };
  for (std::size_t ri = 0; ri < spec.relations.size(); ++ri) {
    const SynthRelation& r = spec.relations[ri];
    const int src = index_of(r.src);
    const int dst = index_of(r.dst);
    auto [fwd, inv] = builder.add_relation(r.name, src, dst, r.inverse);
    (void)inv;
    Rng erng = keyed_rng(seed, "edges", ri);
    const double p_intra = r.intra >= 0.0 ? r.intra : spec.intra;
    const double p_inter = r.inter >= 0.0 ? r.inter : spec.inter;
    std::vector<std::pair<int, int>> pairs;
    for (int u = 0; u < spec.types[src].count; ++u)
      for (int v = 0; v < spec.types[dst].count; ++v) {
        if (src == dst && u == v) continue;
        const double p = classes_of[src][u] == classes_of[dst][v] ? p_intra : p_inter;
        if (erng.uniform() < p) pairs.emplace_back(u, v);
      }
    builder.add_edges(fwd, pairs);
  }
  return builder.build();
}

// ---------------------------------------------------------------------------
// Writing datasets back to TSV + manifest (round trips through load_dataset)

inline void write_dataset(const HeteroGraph& g, const std::string& dir,
                          const std::string& label_type = "",
                          double train_frac = 0.1, double val_frac = 0.1,
                          double test_frac = 0.8, std::uint64_t seed = 0) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ostringstream manifest;
  manifest << "seed = " << seed << "\n\n[split]\ntrain = " << train_frac
           << "\nval = " << val_frac << "\ntest = " << test_frac << "\n";
  for (const NodeType& t : g.types()) {
    std::ofstream out(fs::path(dir) / (t.name + ".tsv"));
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + t.name + ".tsv");
    out.precision(17);
    const Mat& x = g.features(t.id);
    for (int i = 0; i < t.count; ++i) {
      out << t.name << i;
      for (int j = 0; j < t.feat_dim; ++j) out << '\t' << x(i, j);
      out << '\n';
    }
    manifest << "\n[[nodes]]\ntype = \"" << t.name << "\"\nfile = \"" << t.name
             << ".tsv\"\nfeatures = \"dense\"\n";
  }
  for (const RelationSpec& r : g.relations()) {
    if (r.direction != Direction::Forward) continue;
    std::ofstream out(fs::path(dir) / (r.name + ".tsv"));
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + r.name + ".tsv");
    const std::string& sname = g.type(r.src_type).name;
    const std::string& dname = g.type(r.dst_type).name;
    for (const auto& [u, v] : g.adjacency(r.id).pairs())
      out << sname << u << '\t' << dname << v << '\n';
    manifest << "\n[[edges]]\nname = \"" << r.name << "\"\nsrc = \"" << sname << "\"\ndst = \""
             << dname << "\"\nfile = \"" << r.name << ".tsv\"\ninverse = \""
             << g.relation(r.inverse_of).name << "\"\n";
  }
  if (!label_type.empty()) {
    const NodeTypeId t = g.type_id(label_type);
    const auto& labels = g.labels(t);
    if (!labels.has_value())
      throw Error(ErrorKind::MissingLabels, label_type + " has no labels to write");
    std::ofstream out(fs::path(dir) / "labels.tsv");
    for (int i = 0; i < g.type(t).count; ++i)
      if ((*labels)[i] >= 0) out << label_type << i << '\t' << (*labels)[i] << '\n';
    manifest << "\n[labels]\ntype = \"" << label_type << "\"\nfile = \"labels.tsv\"\n";
  }
  std::ofstream mf(fs::path(dir) / "manifest.toml");
  if (!mf) throw Error(ErrorKind::IoError, "cannot write manifest.toml");
  mf << manifest.str();
}

// ---------------------------------------------------------------------------
// Link prediction splits

struct LinkSplit {
  RelationTypeId relation = -1;
  std::vector<std::pair<int, int>> train_pos, val_pos, test_pos;
  std::vector<std::pair<int, int>> val_neg, test_neg;
};

inline LinkSplit make_link_split(const HeteroGraph& g, RelationTypeId rel, double train_frac,
                                 double val_frac, double test_frac, std::uint64_t seed) {
  check_fractions(train_frac, val_frac, test_frac);
  LinkSplit s;
  s.relation = rel;
  auto pairs = g.adjacency(rel).pairs();
  if (pairs.empty()) throw Error(ErrorKind::EmptyPositives, "relation has no edges to split");
  Rng rng = keyed_rng(seed, "link_split");
  for (std::size_t i = pairs.size(); i > 1; --i)
    std::swap(pairs[i - 1], pairs[rng.below(i)]);
  const std::size_t n = pairs.size();
  const std::size_t n_train = static_cast<std::size_t>(train_frac * n);
  const std::size_t n_val = static_cast<std::size_t>(val_frac * n);
  s.train_pos.assign(pairs.begin(), pairs.begin() + n_train);
  s.val_pos.assign(pairs.begin() + n_train, pairs.begin() + std::min(n, n_train + n_val));
  s.test_pos.assign(pairs.begin() + std::min(n, n_train + n_val), pairs.end());

  std::set<std::pair<int, int>> observed(pairs.begin(), pairs.end());
  const int nu = g.type(g.relation(rel).src_type).count;
  const int nv = g.type(g.relation(rel).dst_type).count;
  auto sample_negatives = [&](std::size_t count, std::string_view tag) {
    Rng nrng = keyed_rng(seed, tag);
    std::set<std::pair<int, int>> chosen;
    std::vector<std::pair<int, int>> out;
    std::size_t guard = 0;
    while (out.size() < count && guard < 1000 * count + 1000) {
      ++guard;
      std::pair<int, int> cand{static_cast<int>(nrng.below(nu)), static_cast<int>(nrng.below(nv))};
      if (observed.count(cand) || chosen.count(cand)) continue;
      chosen.insert(cand);
      out.push_back(cand);
    }
    if (out.size() < count)
      throw Error(ErrorKind::SpecInvalid, "graph too dense to sample negative pairs");
    return out;
  };
  s.val_neg = sample_negatives(s.val_pos.size(), "val_neg");
  s.test_neg = sample_negatives(s.test_pos.size(), "test_neg");
  return s;
}

// Copy of g with the given relation's edges replaced by `keep` (inverse
// side rebuilt as the transpose). Used to hide val/test links from message
// passing during link prediction training.
inline HeteroGraph restrict_relation(const HeteroGraph& g, RelationTypeId rel,
                                     const std::vector<std::pair<int, int>>& keep) {
  GraphBuilder builder;
  for (const NodeType& t : g.types()) {
    builder.add_node_type(t.name, t.count, t.feat_dim);
    builder.set_features(t.id, g.features(t.id));
    if (g.labels(t.id).has_value()) builder.set_labels(t.id, *g.labels(t.id));
  }
  const RelationTypeId fwd = g.relation(rel).direction == Direction::Forward
                                 ? rel
                                 : g.relation(rel).inverse_of;
  for (const RelationSpec& r : g.relations()) {
    if (r.direction != Direction::Forward) continue;
    auto [f, i] = builder.add_relation(r.name, r.src_type, r.dst_type,
                                       g.relation(r.inverse_of).name);
    (void)i;
    if (r.id == fwd) {
      if (rel == fwd) {
        builder.add_edges(f, keep);
      } else {
        std::vector<std::pair<int, int>> flipped;
        flipped.reserve(keep.size());
        for (const auto& [u, v] : keep) flipped.emplace_back(v, u);
        builder.add_edges(f, flipped);
      }
    } else {
      builder.add_edges(f, g.adjacency(r.id).pairs());
    }
  }
  return builder.build();
}

}  // namespace mvhet
