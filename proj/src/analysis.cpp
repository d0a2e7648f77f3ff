#include "taskgroup/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "taskgroup/rng.hpp"

namespace taskgroup {

std::vector<double> upper_triangle(const SimilarityMatrix& matrix) {
  const std::size_t n = matrix.size();
  std::vector<double> flat;
  flat.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      flat.push_back(matrix.values[i][j]);
    }
  }
  return flat;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::LengthMismatch,
                "pearson needs two equal-length samples of size >= 2, got " +
                    std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error(ErrorCode::ZeroVariance, "constant sample has no correlation");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

SimilarityMatrix reorder_matrix(const SimilarityMatrix& matrix,
                                const std::vector<TaskLabel>& labels) {
  if (labels.size() != matrix.size()) {
    throw Error(ErrorCode::LabelMismatch,
                "matrices cover " + std::to_string(matrix.size()) + " and " +
                    std::to_string(labels.size()) + " tasks");
  }
  std::vector<std::size_t> perm;
  perm.reserve(labels.size());
  for (const auto& label : labels) {
    auto it = std::find(matrix.labels.begin(), matrix.labels.end(), label);
    if (it == matrix.labels.end()) {
      throw Error(ErrorCode::LabelMismatch, "label '" + label + "' missing from matrix");
    }
    perm.push_back(static_cast<std::size_t>(it - matrix.labels.begin()));
  }
  SimilarityMatrix out;
  out.labels = labels;
  out.kind = matrix.kind;
  const std::size_t n = labels.size();
  out.values.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.values[i][j] = matrix.values[perm[i]][perm[j]];
    }
  }
  return out;
}

double correlate_measures(const SimilarityMatrix& a, const SimilarityMatrix& b) {
  const SimilarityMatrix b_aligned = reorder_matrix(b, a.labels);
  if (a.size() < 3) {
    throw Error(ErrorCode::LengthMismatch,
                "need at least 3 tasks (3 off-diagonal pairs) to correlate");
  }
  return pearson(upper_triangle(a), upper_triangle(b_aligned));
}

std::map<TaskLabel, std::vector<std::string>> tfidf_keywords(
    const std::vector<CorpusDoc>& corpus, std::size_t top_k,
    const std::set<std::string>& stopwords) {
  if (corpus.size() < 2) {
    throw Error(ErrorCode::EmptyCorpus,
                "keyword extraction needs at least 2 documents, got " +
                    std::to_string(corpus.size()));
  }
  if (top_k == 0) {
    throw Error(ErrorCode::InvalidConfig, "top_k must be >= 1");
  }
  {
    std::set<TaskLabel> unique;
    for (const auto& doc : corpus) {
      if (!unique.insert(doc.task).second) {
        throw Error(ErrorCode::DuplicateTrace,
                    "two documents for task '" + doc.task + "'");
      }
    }
  }

  const double n_docs = static_cast<double>(corpus.size());
  std::map<std::string, std::size_t> df;
  std::vector<std::map<std::string, std::size_t>> tf(corpus.size());
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    for (const auto& token : corpus[d].tokens) {
      if (stopwords.count(token)) continue;
      ++tf[d][token];
    }
    for (const auto& [term, count] : tf[d]) ++df[term];
  }

  std::map<TaskLabel, std::vector<std::string>> keywords;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    std::vector<std::pair<double, std::string>> scored;
    scored.reserve(tf[d].size());
    for (const auto& [term, count] : tf[d]) {
      const std::size_t term_df = df.at(term);
      if (term_df == corpus.size()) continue;  // idf = ln(D/D) = 0
      const double score =
          static_cast<double>(count) * std::log(n_docs / static_cast<double>(term_df));
      scored.emplace_back(score, term);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    if (scored.size() > top_k) scored.resize(top_k);
    std::vector<std::string> terms;
    terms.reserve(scored.size());
    for (auto& [score, term] : scored) terms.push_back(std::move(term));
    keywords[corpus[d].task] = std::move(terms);
  }
  return keywords;
}

double paired_permutation_test(const PairedScores& scores, std::size_t n_resamples,
                               std::uint64_t seed) {
  if (scores.a.size() != scores.b.size() || scores.a.size() < 2) {
    throw Error(ErrorCode::LengthMismatch,
                "paired test needs two equal-length samples of size >= 2");
  }
  if (n_resamples < 1000) {
    throw Error(ErrorCode::InvalidConfig,
                "need at least 1000 resamples, got " + std::to_string(n_resamples));
  }
  const std::size_t n = scores.a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = scores.a[i] - scores.b[i];

  double observed = 0.0;
  for (double d : diff) observed += d;
  observed = std::abs(observed / static_cast<double>(n));

  std::size_t hits = 0;
  for (std::size_t r = 0; r < n_resamples; ++r) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += (rng() >> 63) ? diff[i] : -diff[i];
    }
    if (std::abs(sum / static_cast<double>(n)) >= observed) ++hits;
  }
  return static_cast<double>(1 + hits) / static_cast<double>(1 + n_resamples);
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  const auto is_punct = [](unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; };
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      std::size_t begin = i, end = j;
      while (begin < end && is_punct(static_cast<unsigned char>(text[begin]))) ++begin;
      while (end > begin && is_punct(static_cast<unsigned char>(text[end - 1]))) --end;
      if (end > begin) {
        std::string token = text.substr(begin, end - begin);
        for (auto& c : token) {
          c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        tokens.push_back(std::move(token));
      }
    }
    i = j;
  }
  return tokens;
}

}  // namespace taskgroup
