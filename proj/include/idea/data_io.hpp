#pragma once

#include "idea/graph.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <string>

namespace idea {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct SplitMasks {
  NodeList train;
  NodeList val;
  NodeList test;
};

/// Contents of `meta.json`. Keys other than the five counts are carried in
/// `extra` (e.g. provenance of a perturbed graph).
struct DatasetMeta {
  std::string name;
  Index num_nodes = 0;
  Index num_edges = 0;
  Index num_features = 0;
  int num_classes = 0;
  Json extra = Json::object();
};

struct DatasetBundle {
  Graph graph;
  SplitMasks splits;
  std::string name;
  Json provenance = Json::object();
};

/// Portable dataset directory: meta.json, edges.tsv, features.csv, labels.tsv.
/// Validation failures name the file and line.
Graph load_dataset(const fs::path& dir, DatasetMeta* meta = nullptr);
void save_dataset(const Graph& graph, const fs::path& dir, const std::string& name,
                  const Json& extra = Json::object());

/// Perturbed graphs use the dataset format with provenance under meta.json's
/// "provenance" key.
void save_perturbed_graph(const Graph& graph, const fs::path& dir, const Json& provenance);
Graph load_perturbed_graph(const fs::path& dir, Json* provenance = nullptr);

/// Random train/val/test split of the labeled nodes: floor(r0*n) train,
/// floor(r1*n) val, remainder (plus every unlabeled node) to test.
SplitMasks make_split(const Graph& graph, std::array<Real, 3> ratios, std::uint64_t seed);
void save_split(const SplitMasks& split, const fs::path& path);
SplitMasks load_split(const fs::path& path, Index num_nodes);

/// Loads dir/ as a dataset plus dir/split.tsv. Without a split file one is
/// drawn with the default 1:1:8 ratios under `split_seed`.
DatasetBundle load_bundle(const fs::path& dir, std::uint64_t split_seed = 0);

/// CSV with header `node,label,z0,...`; one row per embedding row.
void export_embeddings(const Matrix& z, const LabelVector& labels, const fs::path& path,
                       const NodeList& node_ids = {});

/// One node id per line.
void write_node_list(const NodeList& nodes, const fs::path& path);
NodeList read_node_list(const fs::path& path);

void write_json(const Json& value, const fs::path& path);
Json read_json(const fs::path& path);

/// Raw citation data in the LINQS layout: <name>.content rows
/// `<id> <attr>... <class>` and <name>.cites rows `<cited> <citing>`.
/// Citations to unknown ids and self-citations are dropped.
Graph load_linqs(const fs::path& dir, std::string* name = nullptr);

/// Shortest text form of a double that parses back to the same bits.
std::string format_real(Real value);

}  // namespace idea
