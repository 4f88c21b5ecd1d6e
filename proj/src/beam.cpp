#include "gpg/beam.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "gpg/errors.hpp"

namespace gpg {

SharingSets sharing_sets_of(const std::vector<Trajectory>& group) {
  SharingSets sets;
  // Trie over output tokens; node 0 is the empty prefix shared by everyone.
  std::vector<std::map<Token, std::size_t>> trie(1);
  sets.members.emplace_back();
  sets.set_of.resize(group.size());
  for (std::size_t i = 0; i < group.size(); ++i) {
    const TokenSeq& out = group[i].output;
    std::size_t node = 0;
    sets.set_of[i].resize(out.size());
    for (std::size_t t = 1; t <= out.size(); ++t) {
      sets.set_of[i][t - 1] = node;
      sets.members[node].push_back(i);
      if (t == out.size()) break;
      auto [it, inserted] = trie[node].try_emplace(out[t - 1], trie.size());
      if (inserted) {
        trie.emplace_back();
        sets.members.emplace_back();
      }
      node = it->second;
    }
  }
  return sets;
}

BeamTree::BeamTree(TaskSpec task, TokenSeq input, Segmenter segmenter, double temperature)
    : task_(std::move(task)), input_(std::move(input)), segmenter_(std::move(segmenter)), temperature_(temperature) {
  nodes_.push_back(BeamNode{});
}

std::size_t BeamTree::attach(std::size_t parent, Trajectory traj) {
  const std::size_t start = nodes_[parent].end();
  BeamNode node;
  node.parent = parent;
  node.prefix_len = start;
  node.tokens.assign(traj.output.begin() + static_cast<std::ptrdiff_t>(start), traj.output.end());
  node.logprobs.assign(traj.behavior_logprobs.begin() + static_cast<std::ptrdiff_t>(start),
                       traj.behavior_logprobs.end());
  node.entropies.assign(traj.entropies.begin() + static_cast<std::ptrdiff_t>(start), traj.entropies.end());
  node.leaf = leaves_.size();
  const std::size_t id = nodes_.size();
  nodes_.push_back(std::move(node));
  nodes_[parent].children.push_back(id);
  score(task_, traj);
  Segmentation seg = segmenter_(traj);
  leaves_.push_back(BeamLeaf{id, std::move(traj), std::move(seg)});
  return id;
}

void BeamTree::add_root_rollouts(std::size_t m, const ParamVector& params, Rng& rng, Exec exec) {
  std::vector<std::uint64_t> seeds(m);
  for (auto& s : seeds) s = rng.next();
  std::vector<Trajectory> fresh(m);
  parallel::for_each_index(
      m,
      [&](std::size_t i) {
        Rng local(seeds[i]);
        fresh[i] = rollout(params, input_, task_.horizon, task_.eos, local, temperature_);
      },
      exec);
  for (auto& t : fresh) attach(0, std::move(t));
}

void BeamTree::expand(std::size_t leaf, std::size_t boundary, std::size_t n, const ParamVector& params,
                      Rng& rng, Exec exec) {
  if (leaf >= leaves_.size()) throw DomainError("no leaf " + std::to_string(leaf));
  const Trajectory stem = leaves_[leaf].traj;
  if (boundary == 0 || boundary >= stem.output.size()) {
    throw DomainError("expansion boundary " + std::to_string(boundary) + " must lie strictly inside the output");
  }
  if (!leaves_[leaf].seg.has_boundary(boundary)) {
    throw DomainError("position " + std::to_string(boundary) + " is not a segmentation boundary of leaf " +
                      std::to_string(leaf));
  }

  // Find the node on the path that contains the boundary.
  std::size_t branch = 0;
  for (std::size_t id : path(leaf)) {
    const BeamNode& node = nodes_[id];
    if (node.end() == boundary) {
      branch = id;
      break;
    }
    if (node.prefix_len < boundary && boundary < node.end()) {
      // Split: `id` keeps the head, a new node takes the tail and the subtree.
      const std::size_t cut = boundary - node.prefix_len;
      BeamNode tail;
      tail.parent = id;
      tail.prefix_len = boundary;
      tail.tokens.assign(node.tokens.begin() + static_cast<std::ptrdiff_t>(cut), node.tokens.end());
      tail.logprobs.assign(node.logprobs.begin() + static_cast<std::ptrdiff_t>(cut), node.logprobs.end());
      tail.entropies.assign(node.entropies.begin() + static_cast<std::ptrdiff_t>(cut), node.entropies.end());
      tail.children = node.children;
      tail.leaf = node.leaf;
      const std::size_t tail_id = nodes_.size();
      nodes_.push_back(std::move(tail));
      BeamNode& head = nodes_[id];
      head.tokens.resize(cut);
      head.logprobs.resize(cut);
      head.entropies.resize(cut);
      head.children = {tail_id};
      head.leaf.reset();
      for (std::size_t c : nodes_[tail_id].children) nodes_[c].parent = tail_id;
      if (nodes_[tail_id].leaf) leaves_[*nodes_[tail_id].leaf].node = tail_id;
      branch = id;
      break;
    }
  }

  std::vector<std::uint64_t> seeds(n);
  for (auto& s : seeds) s = rng.next();
  std::vector<Trajectory> fresh(n);
  parallel::for_each_index(
      n,
      [&](std::size_t i) {
        Rng local(seeds[i]);
        fresh[i] = continue_rollout(params, stem, boundary, task_.horizon, task_.eos, local, temperature_);
      },
      exec);
  for (auto& t : fresh) attach(branch, std::move(t));
}

std::vector<Trajectory> BeamTree::leaves() const {
  std::vector<Trajectory> out;
  out.reserve(leaves_.size());
  for (const auto& l : leaves_) out.push_back(l.traj);
  return out;
}

std::vector<std::size_t> BeamTree::path(std::size_t leaf) const {
  std::vector<std::size_t> ids;
  std::optional<std::size_t> cur = leaves_.at(leaf).node;
  while (cur) {
    ids.push_back(*cur);
    cur = nodes_[*cur].parent;
  }
  std::reverse(ids.begin(), ids.end());
  return ids;
}

std::size_t BeamTree::structural_shared_prefix(std::size_t a, std::size_t b) const {
  const auto pa = path(a), pb = path(b);
  std::size_t shared = 0;
  for (std::size_t i = 0; i < std::min(pa.size(), pb.size()) && pa[i] == pb[i]; ++i) {
    shared = nodes_[pa[i]].end();
  }
  return shared;
}

BeamTree init_root(const TaskSpec& task, const TokenSeq& input, std::size_t m, const ParamVector& params,
                   Rng& rng, Segmenter segmenter, double temperature, Exec exec) {
  if (m < 1) throw DomainError("init_root needs M >= 1");
  BeamTree tree(task, input, std::move(segmenter), temperature);
  tree.add_root_rollouts(m, params, rng, exec);
  return tree;
}

std::size_t run_beaming(BeamTree& tree, const BeamSchedule& schedule, const ParamVector& params, Rng& rng,
                        Exec exec) {
  if (schedule.n == 0) return 0;
  std::size_t done = 0;
  for (std::size_t round = 0; round < schedule.rounds; ++round) {
    if (tree.leaf_count() + schedule.n > schedule.leaf_budget) break;
    std::vector<std::pair<std::size_t, std::size_t>> eligible;  // (leaf, first interior boundary)
    const auto& leaves = tree.leaf_records();
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      for (std::size_t b : leaves[i].seg.boundaries) {
        if (b > 0 && b < leaves[i].traj.output.size()) {
          eligible.emplace_back(i, b);
          break;
        }
      }
    }
    if (eligible.empty()) break;
    const auto [leaf, boundary] = eligible[rng.below(eligible.size())];
    tree.expand(leaf, boundary, schedule.n, params, rng, exec);
    ++done;
  }
  return done;
}

}  // namespace gpg
