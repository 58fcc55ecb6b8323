#include "idea/data_io.hpp"

#include "idea/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace idea {

namespace {

[[noreturn]] void fail_at(const fs::path& file, std::size_t line, const std::string& what) {
  throw Error(file.string() + ":" + std::to_string(line) + ": " + what);
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  text = trim(text);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size();
}

bool is_blank(const std::string& line) { return trim(line).empty(); }

}  // namespace

std::string format_real(Real value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc()) throw Error("format_real: conversion failed");
  return std::string(buffer, ptr);
}

void write_json(const Json& value, const fs::path& path) {
  auto out = open_output(path);
  out << value.dump(2) << "\n";
}

Json read_json(const fs::path& path) {
  auto in = open_input(path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

Graph load_dataset(const fs::path& dir, DatasetMeta* meta_out) {
  const fs::path meta_path = dir / "meta.json";
  if (!fs::exists(meta_path)) throw Error("missing " + meta_path.string());
  const Json raw = read_json(meta_path);
  DatasetMeta meta;
  try {
    meta.name = raw.at("name").get<std::string>();
    meta.num_nodes = raw.at("num_nodes").get<Index>();
    meta.num_edges = raw.at("num_edges").get<Index>();
    meta.num_features = raw.at("num_features").get<Index>();
    meta.num_classes = raw.at("num_classes").get<int>();
  } catch (const Json::exception& e) {
    throw Error(meta_path.string() + ": " + e.what());
  }
  for (const auto& [key, value] : raw.items()) {
    if (key != "name" && key != "num_nodes" && key != "num_edges" && key != "num_features" &&
        key != "num_classes") {
      meta.extra[key] = value;
    }
  }
  const Index n = meta.num_nodes;

  const fs::path features_path = dir / "features.csv";
  Matrix features(n, meta.num_features);
  {
    auto in = open_input(features_path);
    std::string line;
    std::size_t line_no = 0;
    Index row = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (is_blank(line)) continue;
      if (row >= n) fail_at(features_path, line_no, "more feature rows than num_nodes=" + std::to_string(n));
      const auto fields = split_fields(line, ',');
      if (static_cast<Index>(fields.size()) != meta.num_features) {
        fail_at(features_path, line_no,
                std::to_string(fields.size()) + " columns, expected " + std::to_string(meta.num_features));
      }
      for (Index j = 0; j < meta.num_features; ++j) {
        Real value = 0;
        if (!parse_number(fields[j], value)) fail_at(features_path, line_no, "malformed number");
        features(row, j) = value;
      }
      ++row;
    }
    if (row != n) {
      fail_at(features_path, line_no,
              std::to_string(row) + " feature rows, meta.json declares " + std::to_string(n));
    }
  }

  const fs::path labels_path = dir / "labels.tsv";
  LabelVector labels = LabelVector::Constant(n, -1);
  {
    auto in = open_input(labels_path);
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::string line;
    std::size_t line_no = 0;
    Index count = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (is_blank(line)) continue;
      const auto fields = split_fields(line, '\t');
      NodeId node = 0;
      int label = 0;
      if (fields.size() != 2 || !parse_number(fields[0], node) || !parse_number(fields[1], label)) {
        fail_at(labels_path, line_no, "expected `node<TAB>label`");
      }
      if (node < 0 || node >= n) fail_at(labels_path, line_no, "node id out of range");
      if (label < -1 || label >= meta.num_classes) fail_at(labels_path, line_no, "label out of range");
      if (seen[node]) fail_at(labels_path, line_no, "duplicate node id");
      seen[node] = true;
      labels[node] = label;
      ++count;
    }
    if (count != n) {
      fail_at(labels_path, line_no, std::to_string(count) + " labels for " + std::to_string(n) + " nodes");
    }
  }

  const fs::path edges_path = dir / "edges.tsv";
  std::vector<Edge> edges;
  {
    auto in = open_input(edges_path);
    std::set<Edge> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (is_blank(line)) continue;
      const auto fields = split_fields(line, '\t');
      NodeId a = 0;
      NodeId b = 0;
      if (fields.size() != 2 || !parse_number(fields[0], a) || !parse_number(fields[1], b)) {
        fail_at(edges_path, line_no, "expected `i<TAB>j`");
      }
      if (a < 0 || b < 0 || a >= n || b >= n) fail_at(edges_path, line_no, "endpoint out of range");
      if (a == b) fail_at(edges_path, line_no, "self-loop");
      if (!seen.insert(Edge(a, b)).second) fail_at(edges_path, line_no, "duplicate edge");
      edges.emplace_back(a, b);
    }
    if (static_cast<Index>(edges.size()) != meta.num_edges) {
      fail_at(edges_path, line_no,
              std::to_string(edges.size()) + " edges, meta.json declares " + std::to_string(meta.num_edges));
    }
  }

  if (meta_out) *meta_out = meta;
  return Graph(std::move(features), std::move(edges), std::move(labels), meta.num_classes);
}

void save_dataset(const Graph& graph, const fs::path& dir, const std::string& name, const Json& extra) {
  fs::create_directories(dir);
  Json meta = Json::object();
  meta["name"] = name;
  meta["num_nodes"] = graph.num_nodes();
  meta["num_edges"] = graph.num_edges();
  meta["num_features"] = graph.num_features();
  meta["num_classes"] = graph.num_classes();
  for (const auto& [key, value] : extra.items()) meta[key] = value;
  write_json(meta, dir / "meta.json");

  {
    auto out = open_output(dir / "edges.tsv");
    for (const Edge& e : graph.edges()) out << e.first << '\t' << e.second << '\n';
  }
  {
    auto out = open_output(dir / "features.csv");
    std::string row;
    for (Index i = 0; i < graph.num_nodes(); ++i) {
      row.clear();
      for (Index j = 0; j < graph.num_features(); ++j) {
        if (j) row += ',';
        row += format_real(graph.features()(i, j));
      }
      out << row << '\n';
    }
  }
  {
    auto out = open_output(dir / "labels.tsv");
    for (Index i = 0; i < graph.num_nodes(); ++i) out << i << '\t' << graph.label(i) << '\n';
  }
}

void save_perturbed_graph(const Graph& graph, const fs::path& dir, const Json& provenance) {
  std::string name = "perturbed";
  if (provenance.contains("source")) name = provenance["source"].get<std::string>() + "-perturbed";
  save_dataset(graph, dir, name, Json{{"provenance", provenance}});
}

Graph load_perturbed_graph(const fs::path& dir, Json* provenance) {
  DatasetMeta meta;
  Graph graph = load_dataset(dir, &meta);
  if (provenance) *provenance = meta.extra.value("provenance", Json::object());
  return graph;
}

SplitMasks make_split(const Graph& graph, std::array<Real, 3> ratios, std::uint64_t seed) {
  const Index n = graph.num_nodes();
  if (n < 3) throw Error("make_split: need at least 3 nodes, got " + std::to_string(n));
  for (const Real r : ratios) {
    if (!(r > 0)) throw Error("make_split: ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw Error("make_split: ratios must sum to 1");

  NodeList labeled;
  SplitMasks split;
  for (NodeId v = 0; v < n; ++v) {
    if (graph.label(v) >= 0) {
      labeled.push_back(v);
    } else {
      split.test.push_back(v);
    }
  }
  auto rng = substream(seed, "split");
  shuffle(labeled, rng);
  const Index m = static_cast<Index>(labeled.size());
  // Small epsilon keeps exact products such as 0.1*10 from flooring to 0.
  const auto n_train = static_cast<Index>(std::floor(ratios[0] * static_cast<Real>(m) + 1e-9));
  const auto n_val = static_cast<Index>(std::floor(ratios[1] * static_cast<Real>(m) + 1e-9));
  split.train.assign(labeled.begin(), labeled.begin() + n_train);
  split.val.assign(labeled.begin() + n_train, labeled.begin() + n_train + n_val);
  split.test.insert(split.test.end(), labeled.begin() + n_train + n_val, labeled.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

void save_split(const SplitMasks& split, const fs::path& path) {
  std::vector<std::pair<NodeId, const char*>> rows;
  for (NodeId v : split.train) rows.emplace_back(v, "train");
  for (NodeId v : split.val) rows.emplace_back(v, "val");
  for (NodeId v : split.test) rows.emplace_back(v, "test");
  std::sort(rows.begin(), rows.end());
  auto out = open_output(path);
  for (const auto& [v, part] : rows) out << v << '\t' << part << '\n';
}

SplitMasks load_split(const fs::path& path, Index num_nodes) {
  auto in = open_input(path);
  SplitMasks split;
  std::vector<bool> seen(static_cast<std::size_t>(num_nodes), false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const auto fields = split_fields(line, '\t');
    NodeId v = 0;
    if (fields.size() != 2 || !parse_number(fields[0], v)) fail_at(path, line_no, "expected `node<TAB>part`");
    if (v < 0 || v >= num_nodes) fail_at(path, line_no, "node id out of range");
    if (seen[v]) fail_at(path, line_no, "node listed twice");
    seen[v] = true;
    const std::string_view part = trim(fields[1]);
    if (part == "train") {
      split.train.push_back(v);
    } else if (part == "val") {
      split.val.push_back(v);
    } else if (part == "test") {
      split.test.push_back(v);
    } else {
      fail_at(path, line_no, "unknown split part");
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw Error(path.string() + ": split does not cover every node");
  }
  return split;
}

DatasetBundle load_bundle(const fs::path& dir, std::uint64_t split_seed) {
  DatasetMeta meta;
  DatasetBundle bundle;
  bundle.graph = load_dataset(dir, &meta);
  bundle.name = meta.name;
  bundle.provenance = meta.extra;
  const fs::path split_path = dir / "split.tsv";
  if (fs::exists(split_path)) {
    bundle.splits = load_split(split_path, bundle.graph.num_nodes());
  } else {
    bundle.splits = make_split(bundle.graph, {0.1, 0.1, 0.8}, split_seed);
  }
  for (const NodeList* part : {&bundle.splits.train, &bundle.splits.val}) {
    for (NodeId v : *part) {
      if (bundle.graph.label(v) < 0) throw Error("split places unlabeled node " + std::to_string(v) + " in train/val");
    }
  }
  return bundle;
}

void export_embeddings(const Matrix& z, const LabelVector& labels, const fs::path& path,
                       const NodeList& node_ids) {
  if (z.rows() != labels.size()) {
    throw Error("export_embeddings: " + std::to_string(z.rows()) + " embedding rows, " +
                std::to_string(labels.size()) + " labels");
  }
  if (!node_ids.empty() && static_cast<Index>(node_ids.size()) != z.rows()) {
    throw Error("export_embeddings: node id count does not match embedding rows");
  }
  auto out = open_output(path);
  out << "node,label";
  for (Index j = 0; j < z.cols(); ++j) out << ",z" << j;
  out << '\n';
  for (Index i = 0; i < z.rows(); ++i) {
    out << (node_ids.empty() ? i : node_ids[i]) << ',' << labels[i];
    for (Index j = 0; j < z.cols(); ++j) out << ',' << format_real(z(i, j));
    out << '\n';
  }
}

void write_node_list(const NodeList& nodes, const fs::path& path) {
  auto out = open_output(path);
  for (NodeId v : nodes) out << v << '\n';
}

NodeList read_node_list(const fs::path& path) {
  auto in = open_input(path);
  NodeList nodes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    NodeId v = 0;
    if (!parse_number(std::string_view(line), v)) fail_at(path, line_no, "expected a node id");
    nodes.push_back(v);
  }
  return nodes;
}

Graph load_linqs(const fs::path& dir, std::string* name_out) {
  fs::path content_path;
  fs::path cites_path;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".content") content_path = entry.path();
    if (entry.path().extension() == ".cites") cites_path = entry.path();
  }
  if (content_path.empty()) throw Error("no *.content file in " + dir.string());
  if (cites_path.empty()) throw Error("no *.cites file in " + dir.string());

  std::map<std::string, NodeId> ids;
  std::vector<std::vector<Real>> rows;
  std::vector<std::string> class_names;
  {
    auto in = open_input(content_path);
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (is_blank(line)) continue;
      const auto fields = split_whitespace(line);
      if (fields.size() < 3) fail_at(content_path, line_no, "expected `<id> <attr>... <class>`");
      if (width == 0) width = fields.size();
      if (fields.size() != width) fail_at(content_path, line_no, "inconsistent attribute count");
      const std::string id(fields.front());
      if (!ids.emplace(id, static_cast<NodeId>(rows.size())).second) fail_at(content_path, line_no, "duplicate id");
      std::vector<Real> attrs(fields.size() - 2);
      for (std::size_t j = 1; j + 1 < fields.size(); ++j) {
        if (!parse_number(fields[j], attrs[j - 1])) fail_at(content_path, line_no, "malformed attribute");
      }
      rows.push_back(std::move(attrs));
      class_names.emplace_back(fields.back());
    }
  }
  std::vector<std::string> classes = class_names;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  const Index n = static_cast<Index>(rows.size());
  const Index d = n ? static_cast<Index>(rows.front().size()) : 0;
  Matrix features(n, d);
  LabelVector labels(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) features(i, j) = rows[i][j];
    labels[i] = static_cast<int>(std::lower_bound(classes.begin(), classes.end(), class_names[i]) - classes.begin());
  }

  std::set<Edge> edges;
  {
    auto in = open_input(cites_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (is_blank(line)) continue;
      const auto fields = split_whitespace(line);
      if (fields.size() != 2) fail_at(cites_path, line_no, "expected `<cited> <citing>`");
      const auto a = ids.find(std::string(fields[0]));
      const auto b = ids.find(std::string(fields[1]));
      if (a == ids.end() || b == ids.end() || a->second == b->second) continue;
      edges.insert(Edge(a->second, b->second));
    }
  }
  if (name_out) *name_out = content_path.stem().string();
  return Graph(std::move(features), std::vector<Edge>(edges.begin(), edges.end()), std::move(labels),
               static_cast<int>(classes.size()));
}

}  // namespace idea
