#include "idea/plot.hpp"

#include <Eigen/Eigenvalues>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace idea {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) return out;
    start = comma + 1;
  }
}

template <typename T>
T parse_field(std::string_view text, const fs::path& path, std::size_t line_no) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(path.string() + ":" + std::to_string(line_no) + ": cannot parse '" + std::string(text) + "'");
  }
  return value;
}

std::string escape_xml(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

EmbeddingTable read_embeddings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.size() < 2 || header[0] != "node" || header[1] != "label") {
    throw Error(path.string() + ":1: expected header starting with node,label");
  }
  const Index dim = static_cast<Index>(header.size()) - 2;
  std::vector<NodeId> nodes;
  std::vector<int> labels;
  std::vector<Real> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (static_cast<Index>(fields.size()) != dim + 2) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim + 2) + " fields");
    }
    nodes.push_back(parse_field<NodeId>(fields[0], path, line_no));
    labels.push_back(parse_field<int>(fields[1], path, line_no));
    for (Index j = 0; j < dim; ++j) values.push_back(parse_field<Real>(fields[j + 2], path, line_no));
  }
  EmbeddingTable t;
  t.nodes = std::move(nodes);
  t.labels = Eigen::Map<const LabelVector>(labels.data(), static_cast<Index>(labels.size()));
  t.z = Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Index>(labels.size()), dim);
  return t;
}

Matrix principal_components_2d(const Matrix& z) {
  Matrix out = Matrix::Zero(z.rows(), 2);
  if (z.rows() == 0 || z.cols() == 0) return out;
  const Matrix centred = z.rowwise() - z.colwise().mean();
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(centred.transpose() * centred);
  const Index k = std::min<Index>(2, z.cols());
  for (Index c = 0; c < k; ++c) {
    Vector axis = eig.eigenvectors().col(z.cols() - 1 - c);  // eigenvalues ascend
    Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis[arg] < 0) axis = -axis;
    out.col(c) = centred * axis;
  }
  return out;
}

std::string scatter_svg(const Matrix& points, const LabelVector& labels, const std::string& title) {
  if (points.cols() != 2 || points.rows() != labels.size()) throw Error("scatter_svg: expected n x 2 points and n labels");
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  constexpr Real size = 480, margin = 30;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size + 20 << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << size / 2 << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << escape_xml(title) << "</text>\n";
  if (points.rows() > 0) {
    const RowVector lo = points.colwise().minCoeff();
    const RowVector hi = points.colwise().maxCoeff();
    auto scale = [&](Real v, Index c) {
      const Real span = hi[c] - lo[c];
      return span > 0 ? (v - lo[c]) / span : Real(0.5);
    };
    char buf[160];
    for (Index i = 0; i < points.rows(); ++i) {
      const Real x = margin + scale(points(i, 0), 0) * (size - 2 * margin);
      const Real y = 20 + margin + (1 - scale(points(i, 1), 1)) * (size - 2 * margin);
      const int label = labels[i];
      const char* colour = label < 0 ? "#000000" : palette[label % 10];
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"%s\" fill-opacity=\"0.8\"/>\n",
                    x, y, colour);
      svg << buf;
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace idea
