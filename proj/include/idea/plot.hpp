#pragma once

#include "idea/data_io.hpp"

namespace idea {

/// Contents of an embeddings CSV written by export_embeddings.
struct EmbeddingTable {
  NodeList nodes;
  LabelVector labels;
  Matrix z;
};

EmbeddingTable read_embeddings(const fs::path& path);

/// Scores on the two leading principal components of the centred rows. Each
/// component's sign is fixed so its largest-magnitude loading is positive;
/// missing components are zero.
Matrix principal_components_2d(const Matrix& z);

/// Self-contained SVG scatter plot coloured by label.
std::string scatter_svg(const Matrix& points, const LabelVector& labels, const std::string& title);

}  // namespace idea
