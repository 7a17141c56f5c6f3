// Copyright 2026 The patlex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PATLEX_EVAL_HPP_
#define PATLEX_EVAL_HPP_

#include <map>
#include <set>
#include <string>
#include <vector>

#include "patlex/corpus.hpp"
#include "patlex/grid.hpp"

namespace patlex {

/// Consistency of the decoded sequences for one word: distinct pattern
/// sequences over all realizations, their fractions and the Gini impurity.
struct ImpurityReport {
  std::string word;
  int realizations = 0;
  int distinct_sequences = 0;
  std::vector<double> fractions;
  double impurity = 0.0;
};

struct RelevanceJudgments {
  std::map<std::string, std::set<std::string>> relevant;  // query -> doc ids

  void validate() const;
};

// Sum of f_i (1 - f_i); fractions must be non-negative and sum to 1.
double gini_impurity(const std::vector<double>& fractions);

// Realization sequences are the pattern indices of all segments whose
// central frame lies inside the annotated range; grouping is by exact
// sequence equality. Words compare case-insensitively.
ImpurityReport word_impurity(const std::vector<Labeling>& labels,
                             const std::vector<WordAnnotation>& annotations,
                             const std::string& word);

// Mean over relevant documents of precision at their ranks; relevant
// documents missing from the ranking contribute 0.
double average_precision(const std::vector<std::string>& ranked,
                         const std::set<std::string>& relevant);

double mean_average_precision(
    const std::map<std::string, std::vector<std::string>>& runs,
    const RelevanceJudgments& judgments);

// JSON-lines {"query": id, "relevant": [doc, ...]}.
RelevanceJudgments load_judgments(const std::string& path);
void save_judgments(const std::string& path, const RelevanceJudgments& judgments);

}  // namespace patlex

#endif  // PATLEX_EVAL_HPP_
