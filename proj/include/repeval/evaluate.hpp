#pragma once

// Full evaluation of one (reference, test) image pair.

#include <cstddef>
#include <optional>

#include "repeval/formats.hpp"
#include "repeval/matching.hpp"
#include "repeval/metrics.hpp"

namespace repeval {

struct PairEvaluation {
  std::size_t n_ref = 0;   // reference points in the common part
  std::size_t n_test = 0;  // test points in the common part
  std::size_t n_rep = 0;
  std::size_t n_ref_total = 0;
  std::size_t n_test_total = 0;
  std::optional<std::size_t> descriptor_matches;  // unset without descriptors
  std::optional<std::size_t> true_matches;
  // Unset when the denominator is zero.
  std::optional<double> eq1;
  std::optional<double> c1;
  std::optional<double> c2;

  bool all_defined() const { return eq1 && c1 && c2; }

  friend bool operator==(const PairEvaluation&, const PairEvaluation&) = default;
};

inline PairEvaluation evaluate_pair(const KeypointSet& ref, const KeypointSet& test,
                                    const Homography& h, const EvalConfig& cfg) {
  cfg.validate();
  const CommonPart part = common_part_filter(ref, test, h);
  const auto correspondences = find_correspondences(ref, test, h, cfg, part);

  PairEvaluation ev;
  ev.n_ref = part.ref_indices.size();
  ev.n_test = part.test_indices.size();
  ev.n_rep = correspondences.size();
  ev.n_ref_total = ref.size();
  ev.n_test_total = test.size();

  const bool whole = cfg.eq1_population == Eq1Population::Whole;
  const std::size_t eq1_ref = whole ? ev.n_ref_total : ev.n_ref;
  const std::size_t eq1_test = whole ? ev.n_test_total : ev.n_test;
  if (std::min(eq1_ref, eq1_test) > 0) ev.eq1 = eq1_repeatability(ev.n_rep, eq1_ref, eq1_test);
  if (ev.n_ref > 0) ev.c1 = criterion1(ev.n_rep, ev.n_ref);
  if (ev.n_ref + ev.n_test > 0) ev.c2 = criterion2(ev.n_rep, ev.n_ref, ev.n_test);

  if (ref.has_descriptors() && test.has_descriptors() &&
      ref.descriptor_dim == test.descriptor_dim) {
    const auto matches = match_descriptors(ref, test, cfg);
    ev.descriptor_matches = matches.size();
    ev.true_matches = verify_matches(matches, ref, test, h, cfg, part);
  }
  return ev;
}

}  // namespace repeval
