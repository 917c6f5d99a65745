#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "viewclean/relation.hpp"
#include "viewclean/view.hpp"

namespace viewclean {

struct DistanceConfig {
  double epsilon = 0.01;
  std::size_t window = 3;  // consecutive small changes required to converge
};

// Per-column normalization for numeric attributes: the largest absolute value
// of that column across both views. Zero when the column is all zero or null.
std::vector<double> column_norms(const ViewResult& v1, const ViewResult& v2);

// Text: 0 when equal, 1 otherwise. Number: |a - b| / norm (0 when norm is 0).
// A null against a non-null value is at distance 1; two nulls are at 0.
double attribute_distance(const Value& a, const Value& b, AttributeType type, double norm);

// Euclidean norm of the attribute distances.
double tuple_distance(std::span<const Value> a, std::span<const Value> b, const Schema& schema,
                      std::span<const double> norms);

// Earth Mover's Distance between two views with uniform row weights 1/|V|.
// flow(i, j) is the mass moved from row i of `from` to row j of `to`.
struct ViewEmd {
  double distance = 0.0;
  std::vector<std::vector<double>> flow;
  std::vector<std::vector<double>> ground;  // tuple distances
};

ViewEmd view_emd(const ViewResult& from, const ViewResult& to);

// EMD distance; 1 between an empty and a non-empty view, 0 between two empty
// views. Throws EvaluationError on schema mismatch.
double view_distance(const ViewResult& v1, const ViewResult& v2);

// 1 - distance, with the distance clamped to [0, 1].
double view_quality(const ViewResult& current, const ViewResult& clean);

using ImpactTable = std::map<RecordId, double>;

// Impact(t) = distance(V(R), V(R - t)) for every t in the view's provenance.
// Deterministic for any worker count (0 picks the hardware concurrency).
ImpactTable view_impact_scores(const ViewSpec& spec, const Relation& rel, std::size_t workers = 0);

// True when the last `window` entries are all <= epsilon.
bool converged(std::span<const double> history, const DistanceConfig& cfg);

}  // namespace viewclean
