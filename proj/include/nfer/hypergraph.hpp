#pragma once
// AU/expression knowledge hypergraph and HGNN convolution.
//
// Vertices are action units, hyperedges are expression classes, and
// H[v][e] = 1 when AU v is consistently active in expression e. Convolution:
//
//   E' = ReLU(Dv^-1/2 H De^-1 H^T Dv^-1/2 E Theta)
//
// with unit hyperedge weights. The final layer of a stack skips the ReLU.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nfer/matrix.hpp"

namespace nfer {

struct Hypergraph {
  Mat incidence;  // vertices x edges, entries 0/1
  std::vector<std::string> vertex_names;
  std::vector<std::string> edge_names;

  std::size_t vertices() const { return incidence.rows(); }
  std::size_t edges() const { return incidence.cols(); }

  /// Validates binary entries, name counts/uniqueness and nonzero degrees.
  /// Throws ParseError for non-binary entries, ValidationError otherwise.
  static Hypergraph from_incidence(Mat incidence, std::vector<std::string> vertex_names, std::vector<std::string> edge_names);
};

struct DegreePair {
  std::vector<double> vertex;  // row sums of H
  std::vector<double> edge;    // column sums of H
};

/// Parses an incidence document. Two layouts are accepted:
///
///   # list form: one line per vertex naming its hyperedges
///   edges: happiness sadness surprise fear anger disgust
///   AU1: sadness surprise fear
///
///   # matrix form
///   format: matrix
///   edges: e1 e2
///   v1: 1 0
///   v2: 1 1
///
/// Tokens are separated by blanks or commas; '#' starts a comment. Edge names
/// in list form match case-insensitively. Without an `edges:` line the edge
/// order is order of first mention.
Hypergraph load_incidence(std::string_view document);
Hypergraph load_incidence_file(const std::filesystem::path& path);

/// Renders the list form accepted by load_incidence.
std::string format_incidence(const Hypergraph& g);

/// Prototypical AU activations for the six basic expressions (13 AUs).
Hypergraph default_knowledge_hypergraph();
std::string_view default_knowledge_hypergraph_text();

DegreePair degrees(const Hypergraph& g);

/// Dv^-1/2 H De^-1 H^T Dv^-1/2 (symmetric, eigenvalues in [0, 1]).
Mat propagation_matrix(const Hypergraph& g);

/// One HGNN layer; ReLU unless `final_layer`.
Mat hgnn_conv(const Mat& features, const Hypergraph& g, const Mat& theta, bool final_layer);
/// Same with a precomputed propagation matrix.
Mat hgnn_conv(const Mat& features, const Mat& propagation, const Mat& theta, bool final_layer);

}  // namespace nfer
