#pragma once

#include <cstdint>
#include <vector>

#include "viewclean/relation.hpp"
#include "viewclean/sampling.hpp"
#include "viewclean/view.hpp"

namespace testing_support {

using viewclean::Relation;
using viewclean::Rng;
using viewclean::ViewResult;
using viewclean::ViewSpec;

// The two views of the running example: dirty and clean Top3 restaurants.
ViewResult top3_dirty();
ViewResult top3_clean();

// Minimum transport cost over all basic feasible solutions, found by
// enumerating every spanning tree of the complete bipartite graph between
// rows and columns. Uniform masses 1/m and 1/n.
double brute_force_emd(const std::vector<std::vector<double>>& cost);

// Tuple distances between every row pair, computed directly from the
// definitions (independent from the library's helpers).
std::vector<std::vector<double>> reference_ground(const ViewResult& a, const ViewResult& b);

// Small random view results sharing one (text, number, number) schema.
ViewResult random_view(Rng& rng, std::size_t rows);

// Restaurants-like table: cuisine, city, rating (may be null), price.
Relation random_relation(Rng& rng, std::size_t rows);
// A random view over random_relation's schema.
ViewSpec random_spec(Rng& rng);

}  // namespace testing_support
