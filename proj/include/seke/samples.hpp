#pragma once
// Per-record sampling state shared by the prompt engine and the UAMC loop.

#include <string>
#include <vector>

#include "seke/affect.hpp"

namespace seke {

// Successful rounds only; each round carries exactly the target tasks.
struct SampleSet {
  std::string record_id;
  TaskSet targets;
  std::vector<PartialAnnotation> rounds;
  int failed_rounds = 0;

  std::size_t size() const { return rounds.size(); }
  bool empty() const { return rounds.empty(); }

  friend bool operator==(const SampleSet&, const SampleSet&) = default;
};

struct TaskUncertainty {
  TaskKind task = TaskKind::Expression;
  double raw = 0.0;
  double normalized = 0.0;
  int round = 0;  // cumulative successful samples when evaluated

  friend bool operator==(const TaskUncertainty&, const TaskUncertainty&) = default;
};

}  // namespace seke
