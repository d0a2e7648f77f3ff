#ifndef TASKGROUP_ANALYSIS_HPP
#define TASKGROUP_ANALYSIS_HPP

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "taskgroup/similarity.hpp"

namespace taskgroup {

/// One pre-tokenized document per task.
struct CorpusDoc {
  TaskLabel task;
  std::vector<std::string> tokens;
};

/// Per-unit metric values of two systems, paired by unit.
struct PairedScores {
  std::vector<double> a;
  std::vector<double> b;
};

/// Off-diagonal entries S[i][j], i < j, in row-major order.
std::vector<double> upper_triangle(const SimilarityMatrix& matrix);

/// Sample Pearson correlation coefficient.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Pearson correlation between the upper triangles of two matrices over the
/// same label set; B is reordered to A's label order first.
double correlate_measures(const SimilarityMatrix& a, const SimilarityMatrix& b);

/// Reorders a matrix to the given label order (labels must be the same set).
SimilarityMatrix reorder_matrix(const SimilarityMatrix& matrix,
                                const std::vector<TaskLabel>& labels);

/// Top-k terms per document by tf * ln(D / df). Stopwords and terms present
/// in every document (idf = 0) are excluded; ties break alphabetically.
std::map<TaskLabel, std::vector<std::string>> tfidf_keywords(
    const std::vector<CorpusDoc>& corpus, std::size_t top_k,
    const std::set<std::string>& stopwords);

/// Two-sided paired sign-flip permutation test on the differences a - b.
/// p = (1 + #{resamples with |mean| >= |observed mean|}) / (1 + n_resamples).
/// Each resample draws its flips from a counter-derived generator, so the
/// result depends only on the seed.
double paired_permutation_test(const PairedScores& scores, std::size_t n_resamples,
                               std::uint64_t seed);

/// Lowercases (ASCII), splits on whitespace, strips leading/trailing
/// punctuation per token, drops empties.
std::vector<std::string> tokenize(const std::string& text);

}  // namespace taskgroup

#endif  // TASKGROUP_ANALYSIS_HPP
