// Copyright (c) 2026 The voicecloak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Speaker-verification evaluation: gender-dependent trial construction with a
// fixed enrollment fraction and nontarget:target ratio, mean + length-norm
// enrollment models, cosine scoring, and EER by threshold sweep with linear
// interpolation between ROC vertices.

#ifndef VOICECLOAK_EVALUATION_HPP_
#define VOICECLOAK_EVALUATION_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "voicecloak/corpus.hpp"
#include "voicecloak/embeddings.hpp"
#include "voicecloak/errors.hpp"
#include "voicecloak/rng.hpp"

namespace voicecloak {

struct Trial {
  std::string enroll_speaker_id;
  std::string test_utterance_id;
  bool is_target = false;

  friend bool operator==(const Trial& a, const Trial& b) {
    return a.enroll_speaker_id == b.enroll_speaker_id &&
           a.test_utterance_id == b.test_utterance_id &&
           a.is_target == b.is_target;
  }
};

// A speaker whose same-gender pool could not supply the full nontarget quota.
struct NontargetShortfall {
  std::string speaker_id;
  int requested = 0;
  int drawn = 0;
};

struct TrialList {
  Gender gender = Gender::kFemale;
  std::vector<Trial> trials;
  // speaker_id -> enrollment utterance ids (disjoint from all test trials)
  std::map<std::string, std::vector<std::string>> enrollment;
  std::vector<NontargetShortfall> shortfalls;
};

struct TrialProtocolParams {
  double enroll_fraction = 0.25;
  int nontarget_ratio = 35;
  std::uint64_t seed = 1;
};

namespace evaluation_detail {
constexpr std::uint64_t kStreamEnroll = 31;
constexpr std::uint64_t kStreamNontarget = 32;
}  // namespace evaluation_detail

// Builds the trial list for one gender from the corpus eval split. Per
// speaker: floor(enroll_fraction * n) enrollment utterances (at least 1),
// every remaining utterance becomes a target trial, and nontarget trials are
// sampled without replacement from the other same-gender speakers' test
// utterances at ratio nontargets per target where the pool allows.
inline TrialList build_trials(const Corpus& corpus, Gender gender,
                              const TrialProtocolParams& params) {
  require(params.enroll_fraction > 0.0 && params.enroll_fraction < 1.0,
          ErrorCode::kInvalidParameter, "enroll_fraction must be in (0, 1)");
  require(params.nontarget_ratio >= 1, ErrorCode::kInvalidParameter,
          "nontarget_ratio must be >= 1");

  TrialList list;
  list.gender = gender;

  struct SpeakerPool {
    const SpeakerProfile* speaker;
    int index;
    std::vector<std::string> enroll_ids;
    std::vector<std::string> test_ids;
  };
  std::vector<SpeakerPool> pools;

  for (std::size_t si = 0; si < corpus.speakers.size(); ++si) {
    const auto& spk = corpus.speakers[si];
    if (spk.gender != gender) continue;
    const auto eval_utts = corpus.utterances_of(spk.speaker_id, SplitTag::kEval);
    require(eval_utts.size() >= 2, ErrorCode::kInsufficientData,
            "speaker " + spk.speaker_id + " has fewer than 2 eval utterances");

    const int n = static_cast<int>(eval_utts.size());
    const int n_enroll = std::max(
        1, static_cast<int>(std::floor(params.enroll_fraction * n)));

    Rng rng(derive_seed(params.seed, evaluation_detail::kStreamEnroll,
                        static_cast<std::uint64_t>(si)));
    const std::vector<int> picks = rng.sample_indices(n, n_enroll);
    std::vector<bool> enrolled(static_cast<std::size_t>(n), false);
    for (int p : picks) enrolled[static_cast<std::size_t>(p)] = true;

    SpeakerPool pool;
    pool.speaker = &spk;
    pool.index = static_cast<int>(si);
    for (int i = 0; i < n; ++i) {
      if (enrolled[static_cast<std::size_t>(i)]) {
        pool.enroll_ids.push_back(eval_utts[static_cast<std::size_t>(i)]->utterance_id);
      } else {
        pool.test_ids.push_back(eval_utts[static_cast<std::size_t>(i)]->utterance_id);
      }
    }
    pools.push_back(std::move(pool));
  }
  require(!pools.empty(), ErrorCode::kInsufficientData,
          std::string("no speakers of gender ") + gender_name(gender));

  for (const auto& pool : pools) {
    list.enrollment[pool.speaker->speaker_id] = pool.enroll_ids;
  }

  for (const auto& pool : pools) {
    for (const auto& test_id : pool.test_ids) {
      list.trials.push_back({pool.speaker->speaker_id, test_id, true});
    }

    std::vector<std::string> other_tests;
    for (const auto& other : pools) {
      if (other.speaker->speaker_id == pool.speaker->speaker_id) continue;
      other_tests.insert(other_tests.end(), other.test_ids.begin(),
                         other.test_ids.end());
    }
    const int requested =
        params.nontarget_ratio * static_cast<int>(pool.test_ids.size());
    Rng rng(derive_seed(params.seed, evaluation_detail::kStreamNontarget,
                        static_cast<std::uint64_t>(pool.index)));
    const std::vector<int> picks = rng.sample_indices(
        static_cast<int>(other_tests.size()), requested);
    for (int p : picks) {
      list.trials.push_back(
          {pool.speaker->speaker_id, other_tests[static_cast<std::size_t>(p)],
           false});
    }
    if (static_cast<int>(picks.size()) < requested) {
      list.shortfalls.push_back({pool.speaker->speaker_id, requested,
                                 static_cast<int>(picks.size())});
    }
  }
  return list;
}

// Mean of the enrollment embeddings, length-normalized to a unit vector.
inline Eigen::VectorXd enroll_model(
    const std::vector<SpeakerEmbedding>& embeddings) {
  require(!embeddings.empty(), ErrorCode::kEmptyInput,
          "enrollment needs at least one embedding");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(embeddings.front().vector.size());
  for (const auto& emb : embeddings) {
    require(emb.vector.size() == mean.size(), ErrorCode::kDimensionMismatch,
            "enrollment embeddings differ in length");
    mean += emb.vector;
  }
  mean /= static_cast<double>(embeddings.size());
  const double norm = mean.norm();
  require(norm > 0.0, ErrorCode::kZeroNormInput,
          "enrollment mean has zero norm");
  return mean / norm;
}

inline double cosine_score(const Eigen::VectorXd& model,
                           const Eigen::VectorXd& test_embedding) {
  require(model.size() == test_embedding.size(), ErrorCode::kDimensionMismatch,
          "model/test embedding length mismatch");
  const double model_norm = model.norm();
  const double test_norm = test_embedding.norm();
  require(model_norm > 0.0 && test_norm > 0.0, ErrorCode::kZeroNormInput,
          "cosine score of a zero vector");
  return model.dot(test_embedding) / (model_norm * test_norm);
}

struct ScoredTrial {
  Trial trial;
  double score = 0.0;
};

struct ScoredTrialSet {
  std::vector<ScoredTrial> scores;
};

struct EERResult {
  double eer = 0.0;
  double threshold = 0.0;
  int n_target = 0;
  int n_nontarget = 0;
};

// EER by sweeping candidate thresholds placed strictly between distinct score
// values (equal scores act atomically), with linear interpolation between the
// two adjacent ROC vertices where FAR - FRR changes sign. Accept iff
// score >= threshold.
inline EERResult compute_eer(const ScoredTrialSet& scored) {
  std::vector<double> target_scores;
  std::vector<double> nontarget_scores;
  for (const auto& st : scored.scores) {
    require(std::isfinite(st.score), ErrorCode::kNonFiniteInput,
            "trial score is not finite");
    (st.trial.is_target ? target_scores : nontarget_scores).push_back(st.score);
  }
  require(!target_scores.empty(), ErrorCode::kMissingClass,
          "no target trials");
  require(!nontarget_scores.empty(), ErrorCode::kMissingClass,
          "no nontarget trials");

  const double n_t = static_cast<double>(target_scores.size());
  const double n_n = static_cast<double>(nontarget_scores.size());

  std::vector<double> distinct;
  distinct.reserve(target_scores.size() + nontarget_scores.size());
  distinct.insert(distinct.end(), target_scores.begin(), target_scores.end());
  distinct.insert(distinct.end(), nontarget_scores.begin(),
                  nontarget_scores.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()),
                 distinct.end());

  // Candidate thresholds: below all scores, between adjacent distinct scores,
  // above all scores.
  std::vector<double> thresholds;
  thresholds.push_back(distinct.front() - 1.0);
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
    thresholds.push_back(0.5 * (distinct[i] + distinct[i + 1]));
  }
  thresholds.push_back(distinct.back() + 1.0);

  std::sort(target_scores.begin(), target_scores.end());
  std::sort(nontarget_scores.begin(), nontarget_scores.end());

  // Walk thresholds in increasing order, counting rejections incrementally.
  std::size_t t_below = 0;  // target scores < threshold
  std::size_t n_below = 0;  // nontarget scores < threshold
  double prev_far = 1.0, prev_frr = 0.0, prev_thr = thresholds.front();
  bool first = true;
  for (double thr : thresholds) {
    while (t_below < target_scores.size() && target_scores[t_below] < thr) {
      ++t_below;
    }
    while (n_below < nontarget_scores.size() &&
           nontarget_scores[n_below] < thr) {
      ++n_below;
    }
    const double frr = static_cast<double>(t_below) / n_t;
    const double far =
        (n_n - static_cast<double>(n_below)) / n_n;  // accepted nontargets
    if (!first) {
      const double d_prev = prev_far - prev_frr;
      const double d_cur = far - frr;
      if (d_prev >= 0.0 && d_cur <= 0.0) {
        const double denom = d_prev - d_cur;
        const double lambda = denom == 0.0 ? 0.0 : d_prev / denom;
        EERResult result;
        result.eer = prev_far + lambda * (far - prev_far);
        result.threshold = prev_thr + lambda * (thr - prev_thr);
        result.n_target = static_cast<int>(target_scores.size());
        result.n_nontarget = static_cast<int>(nontarget_scores.size());
        return result;
      }
    }
    prev_far = far;
    prev_frr = frr;
    prev_thr = thr;
    first = false;
  }
  // FAR - FRR runs from +1 to -1, so a sign change always exists.
  fail(ErrorCode::kInvalidParameter, "EER crossing not found");
}

using UtteranceSource = std::map<std::string, const FeatureSequence*>;

namespace evaluation_detail {
inline const FeatureSequence& source_get(const UtteranceSource& source,
                                         const std::string& utterance_id) {
  auto it = source.find(utterance_id);
  require(it != source.end() && it->second != nullptr,
          ErrorCode::kMissingUtterance,
          "utterance not in source map: " + utterance_id);
  return *it->second;
}
}  // namespace evaluation_detail

// Scores every trial with cosine(enrollment model, test embedding). The
// source map supplies both enrollment and test features; callers evaluating a
// processed condition map enrollment ids to original-condition features and
// test ids to the condition's features.
inline ScoredTrialSet score_trials(const SpeakerEncoder& encoder,
                                   const TrialList& trials,
                                   const UtteranceSource& source) {
  using evaluation_detail::source_get;
  std::map<std::string, Eigen::VectorXd> models;
  for (const auto& [speaker_id, utt_ids] : trials.enrollment) {
    std::vector<SpeakerEmbedding> embeddings;
    for (const auto& utt_id : utt_ids) {
      embeddings.push_back(
          extract_embedding(encoder, source_get(source, utt_id)));
    }
    models[speaker_id] = enroll_model(embeddings);
  }

  std::map<std::string, Eigen::VectorXd> test_embeddings;
  ScoredTrialSet scored;
  scored.scores.reserve(trials.trials.size());
  for (const auto& trial : trials.trials) {
    auto it = models.find(trial.enroll_speaker_id);
    require(it != models.end(), ErrorCode::kMissingUtterance,
            "no enrollment for speaker " + trial.enroll_speaker_id);
    auto cached = test_embeddings.find(trial.test_utterance_id);
    if (cached == test_embeddings.end()) {
      cached = test_embeddings
                   .emplace(trial.test_utterance_id,
                            extract_embedding(
                                encoder,
                                source_get(source, trial.test_utterance_id))
                                .vector)
                   .first;
    }
    scored.scores.push_back(
        {trial, cosine_score(it->second, cached->second)});
  }
  return scored;
}

inline EERResult evaluate_condition(const SpeakerEncoder& encoder,
                                    const TrialList& trials,
                                    const UtteranceSource& source) {
  return compute_eer(score_trials(encoder, trials, source));
}

// Mean per-frame Euclidean distance, normalized by the mean frame norm of the
// reference.
inline double content_distortion(const FeatureSequence& reference,
                                 const FeatureSequence& candidate) {
  require(reference.num_frames() == candidate.num_frames() &&
              reference.feature_dim() == candidate.feature_dim(),
          ErrorCode::kShapeMismatch,
          "reference/candidate shapes differ");
  const int t_len = reference.num_frames();
  double dist = 0.0;
  double ref_norm = 0.0;
  for (int t = 0; t < t_len; ++t) {
    dist += (reference.frames.row(t) - candidate.frames.row(t)).norm();
    ref_norm += reference.frames.row(t).norm();
  }
  if (ref_norm == 0.0) {
    return dist == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return dist / ref_norm;
}

// --- Trial and score files ---------------------------------------------------
//
// UTF-8 text, one trial per line: enroll_speaker \t test_utterance \t tgt|non
// Score files append \t score.

inline void save_trial_list(const TrialList& trials,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& trial : trials.trials) {
    out << trial.enroll_speaker_id << '\t' << trial.test_utterance_id << '\t'
        << (trial.is_target ? "tgt" : "non") << '\n';
  }
  out.flush();
  require(out.good(), ErrorCode::kIoError, "write failed: " + path.string());
}

inline void save_scores(const ScoredTrialSet& scored,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::kIoError, "cannot write " + path.string());
  char buf[40];
  for (const auto& st : scored.scores) {
    std::snprintf(buf, sizeof(buf), "%.17g", st.score);
    out << st.trial.enroll_speaker_id << '\t' << st.trial.test_utterance_id
        << '\t' << (st.trial.is_target ? "tgt" : "non") << '\t' << buf << '\n';
  }
  out.flush();
  require(out.good(), ErrorCode::kIoError, "write failed: " + path.string());
}

namespace evaluation_detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, '\t')) fields.push_back(field);
  return fields;
}

inline bool parse_label(const std::string& token, std::size_t line_no,
                        const std::filesystem::path& path) {
  if (token == "tgt") return true;
  if (token == "non") return false;
  fail(ErrorCode::kMalformedFile,
       path.string() + ": bad trial label '" + token + "' on line " +
           std::to_string(line_no));
}

}  // namespace evaluation_detail

inline std::vector<Trial> load_trials(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIoError, "cannot read " + path.string());
  std::vector<Trial> trials;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = evaluation_detail::split_fields(line);
    if (fields.size() != 3) {
      fail(ErrorCode::kMalformedFile,
           path.string() + ": expected 3 fields on line " +
               std::to_string(line_no));
    }
    trials.push_back({fields[0], fields[1],
                      evaluation_detail::parse_label(fields[2], line_no, path)});
  }
  return trials;
}

inline ScoredTrialSet load_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIoError, "cannot read " + path.string());
  ScoredTrialSet scored;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = evaluation_detail::split_fields(line);
    if (fields.size() != 4) {
      fail(ErrorCode::kMalformedFile,
           path.string() + ": expected 4 fields on line " +
               std::to_string(line_no));
    }
    char* end = nullptr;
    const double score = std::strtod(fields[3].c_str(), &end);
    if (end == fields[3].c_str() || *end != '\0') {
      fail(ErrorCode::kMalformedFile,
           path.string() + ": bad score on line " + std::to_string(line_no));
    }
    scored.scores.push_back(
        {{fields[0], fields[1],
          evaluation_detail::parse_label(fields[2], line_no, path)},
         score});
  }
  return scored;
}

}  // namespace voicecloak

#endif  // VOICECLOAK_EVALUATION_HPP_
