#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace recam::data {

// One task instance: a passage, a cloze question with exactly one
// placeholder, five candidate answers, and an optional gold label.
struct RecamSample {
  std::string passage;
  std::string question;
  std::array<std::string, 5> options;
  int label = -1;  // 0..4, or -1 when unlabeled

  bool labeled() const { return label >= 0; }
};

bool operator==(const RecamSample& a, const RecamSample& b);

// Fixed ids of the nine reserved tokens; they occupy the lowest ids of every
// vocabulary so corpus words always sort above them.
struct SpecialTokens {
  static constexpr int64_t pad = 0;
  static constexpr int64_t unk = 1;
  static constexpr int64_t bos = 2;          // <s>
  static constexpr int64_t eos = 3;          // </s>
  static constexpr int64_t q_open = 4;       // <q>
  static constexpr int64_t q_close = 5;      // </q>
  static constexpr int64_t ent_open = 6;     // <ent>
  static constexpr int64_t ent_close = 7;    // </ent>
  static constexpr int64_t placeholder = 8;  // @placeholder
  static constexpr int64_t count = 9;

  static const std::array<std::string, 9>& strings();
};

// Word-level tokenizer: lowercases, keeps alphanumeric runs together, emits
// every other non-space character as its own token. Any case variant of
// "@placeholder" becomes the single placeholder atom. tokenize(detokenize(t))
// == t for any token sequence the tokenizer can produce.
std::vector<std::string> tokenize_words(std::string_view text);
std::string detokenize_words(const std::vector<std::string>& tokens);

// Token <-> id bijection with the special tokens pre-seeded. Mutable until
// freeze(); afterwards add() throws and lookups of unknown words yield unk.
class Vocab {
 public:
  Vocab();

  // Frequency-thresholded vocabulary over all sample text, insertion in
  // first-occurrence order (deterministic given the sample order).
  static Vocab build(const std::vector<RecamSample>& samples, int64_t min_count);

  int64_t add(const std::string& token);  // existing token: returns its id
  void freeze();
  bool frozen() const { return frozen_; }

  int64_t size() const { return static_cast<int64_t>(tokens_.size()); }
  bool contains(const std::string& token) const;
  int64_t id(const std::string& token) const;  // unk when absent
  const std::string& token(int64_t id) const;  // throws VocabError

  std::vector<int64_t> encode_words(const std::vector<std::string>& words) const;
  std::vector<int64_t> encode(std::string_view text) const;  // tokenize + map

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

 private:
  std::unordered_map<std::string, int64_t> to_id_;
  std::vector<std::string> tokens_;
  bool frozen_ = false;
};

// Reads one JSON object per line with fields article, question,
// option_0..option_4 and optional label. Malformed JSON throws ParseError
// with the 1-based line number; missing fields, bad labels, or a question
// without exactly one placeholder throw SampleError naming the line.
std::vector<RecamSample> load_jsonl(const std::string& path);
void write_jsonl(const std::vector<RecamSample>& samples, const std::string& path);

// The question+candidates suffix shared by every chunk of a sample:
// <q> question </q> then <ent> candidate </ent> per option, in order.
std::vector<int64_t> build_answer_sequence(const RecamSample& sample,
                                           const Vocab& vocab);

// Offsets of the five <ent> tokens inside an answer sequence.
std::array<int64_t, 5> ent_offsets_in_answer(const std::vector<int64_t>& answer);

// The decomposition of one sample into model-length sequences. Each chunk is
// [<s>, passage piece, </s>, answer sequence]; the answer sequence is
// token-identical across chunks and the pieces partition the passage.
struct ChunkSet {
  std::vector<std::vector<int64_t>> chunks;
  std::vector<int64_t> a_start;  // index of the answer-sequence start per chunk
  std::vector<std::array<int64_t, 5>> ent_positions;  // per chunk, ascending

  // Optional explicit position ids per chunk. Empty (the default for chunks
  // straight out of build_chunks) means sequential 0..n-1; permute_candidates
  // fills these in so permuted segments keep their original ids.
  std::vector<std::vector<int64_t>> position_ids;

  int64_t size() const { return static_cast<int64_t>(chunks.size()); }
};

// Splits the passage into consecutive pieces of max_seq_len - len(a) - 2
// tokens (two framing tokens per chunk); the last piece may be shorter and an
// empty passage still yields one chunk. Throws SampleError when the answer
// sequence plus framing leaves no room for passage tokens.
ChunkSet build_chunks(const RecamSample& sample, const Vocab& vocab,
                      int64_t max_seq_len);

// Reorders the five candidate segments of every chunk: slot j of the result
// holds segment order[j] of the input, moved as a unit together with its
// position ids, so the encoder sees a pure row permutation of each chunk.
// order must be a permutation of {0..4}. Scores of the permuted set satisfy
// f'[j] = f[order[j]] up to summation-order rounding.
ChunkSet permute_candidates(const ChunkSet& chunks,
                            const std::array<int, 5>& order);

// Deterministic synthetic cloze data: each question carries a cue word next
// to the placeholder that names the correct candidate's position, so a model
// that learns the cue->slot mapping can exceed chance while a rule oracle
// scores 100%. Gold labels are uniform over 0..4, and the candidate words are
// shuffled independently of the label.
std::vector<RecamSample> generate_synthetic(int64_t count, int64_t vocab_size,
                                            int64_t passage_len, uint64_t seed);

// Applies the generator's hidden rule: the slot named by the cue word found
// in the question, or -1 when no cue is present.
int synthetic_rule_answer(const RecamSample& sample);

struct DatasetStats {
  int64_t samples = 0;
  int64_t labeled = 0;
  std::array<int64_t, 5> label_histogram{};
  int64_t passage_tokens_max = 0;
  double passage_tokens_mean = 0.0;
  int64_t question_tokens_max = 0;
  double question_tokens_mean = 0.0;
};

DatasetStats dataset_stats(const std::vector<RecamSample>& samples);

}  // namespace recam::data
