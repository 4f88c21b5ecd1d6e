#pragma once

// Macro-action beaming: a prefix tree of trajectories grown by branching
// fresh continuations at segmentation boundaries.

#include <cstddef>
#include <optional>
#include <vector>

#include "gpg/env.hpp"
#include "gpg/parallel.hpp"
#include "gpg/policy.hpp"
#include "gpg/segmentation.hpp"

namespace gpg {

struct BeamNode {
  std::optional<std::size_t> parent;
  std::size_t prefix_len = 0;  // output tokens before this node's span
  TokenSeq tokens;
  std::vector<double> logprobs;
  std::vector<double> entropies;
  std::vector<std::size_t> children;
  std::optional<std::size_t> leaf;

  std::size_t end() const { return prefix_len + tokens.size(); }
};

struct BeamLeaf {
  std::size_t node;
  Trajectory traj;
  Segmentation seg;
};

/// For each leaf i and output position t (1-based), the id of S_t: the set of
/// leaves whose first t-1 output tokens equal leaf i's.
struct SharingSets {
  std::vector<std::vector<std::size_t>> set_of;  // [leaf][t - 1]
  std::vector<std::vector<std::size_t>> members;  // [set id] -> leaves

  std::size_t id(std::size_t leaf, std::size_t t) const { return set_of.at(leaf).at(t - 1); }
  const std::vector<std::size_t>& set(std::size_t leaf, std::size_t t) const { return members.at(id(leaf, t)); }
};

/// Groups trajectories by shared output-prefix content (a token trie).
SharingSets sharing_sets_of(const std::vector<Trajectory>& group);

class BeamTree {
 public:
  BeamTree(TaskSpec task, TokenSeq input, Segmenter segmenter, double temperature = 1.0);

  /// Split the leaf's path at `boundary` (a segmentation boundary strictly
  /// inside its output) and roll out N fresh continuations from that macro
  /// state. The original continuation stays as one child.
  void expand(std::size_t leaf, std::size_t boundary, std::size_t n, const ParamVector& params, Rng& rng,
              Exec exec = Exec::Parallel);

  /// Completed trajectories in creation order: the advantage group.
  std::vector<Trajectory> leaves() const;
  const std::vector<BeamLeaf>& leaf_records() const { return leaves_; }
  const std::vector<BeamNode>& nodes() const { return nodes_; }
  std::size_t leaf_count() const { return leaves_.size(); }
  const TaskSpec& task() const { return task_; }
  const TokenSeq& input() const { return input_; }

  /// Node ids from the root to the leaf's node.
  std::vector<std::size_t> path(std::size_t leaf) const;
  /// Output length shared through the tree topology (prefix length at the
  /// deepest common node end).
  std::size_t structural_shared_prefix(std::size_t a, std::size_t b) const;

  SharingSets sharing_sets() const { return sharing_sets_of(leaves()); }

  /// Used by init_root: attach complete root-level rollouts.
  void add_root_rollouts(std::size_t m, const ParamVector& params, Rng& rng, Exec exec = Exec::Parallel);

 private:
  std::size_t attach(std::size_t parent, Trajectory traj);

  TaskSpec task_;
  TokenSeq input_;
  Segmenter segmenter_;
  double temperature_;
  std::vector<BeamNode> nodes_;
  std::vector<BeamLeaf> leaves_;
};

BeamTree init_root(const TaskSpec& task, const TokenSeq& input, std::size_t m, const ParamVector& params,
                   Rng& rng, Segmenter segmenter = {}, double temperature = 1.0, Exec exec = Exec::Parallel);

struct BeamSchedule {
  std::size_t n = 2;           // continuations per expansion
  std::size_t rounds = 2;      // expansions attempted
  std::size_t leaf_budget = 8;
};

/// Each round expands the first interior segmentation boundary of a leaf
/// drawn uniformly from the leaves that have one. Stops when no leaf is
/// eligible or the next expansion would exceed the leaf budget. Returns the
/// number of expansions performed.
std::size_t run_beaming(BeamTree& tree, const BeamSchedule& schedule, const ParamVector& params, Rng& rng,
                        Exec exec = Exec::Parallel);

}  // namespace gpg
