#include "recam/data.hpp"

#include <algorithm>
#include <numeric>
#include <cctype>
#include <fstream>
#include <sstream>

#include "recam/errors.hpp"
#include "recam/rng.hpp"

namespace recam::data {

namespace {

constexpr std::string_view kPlaceholderToken = "@placeholder";

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0; }

bool matches_placeholder_at(std::string_view text, size_t pos) {
  // "@placeholder" in any case, not followed by another word character.
  if (pos + kPlaceholderToken.size() > text.size()) return false;
  for (size_t i = 0; i < kPlaceholderToken.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[pos + i]);
    if (std::tolower(c) != kPlaceholderToken[i]) return false;
  }
  const size_t end = pos + kPlaceholderToken.size();
  return end == text.size() || !is_word_char(static_cast<unsigned char>(text[end]));
}

int64_t count_placeholder_tokens(const std::vector<std::string>& tokens) {
  return std::count(tokens.begin(), tokens.end(), std::string(kPlaceholderToken));
}

// The generator's hidden rule: a cue word placed next to the placeholder
// names the position of the correct candidate ("first" .. "fifth"). Candidate
// slots sit at fixed sequence positions, so a model only has to combine the
// cue's identity with each marker's position — a pairing that is learnable
// from a few dozen samples — while a cue-ignoring model stays at chance.
const std::array<std::string, 5> kAnswers = {"courage", "patience", "wisdom",
                                             "loyalty", "honesty"};
const std::array<std::string, 5> kOrdinals = {"first", "second", "third",
                                              "fourth", "fifth"};

std::string filler_word(int64_t index) {
  return "w" + std::to_string(index);
}

}  // namespace

bool operator==(const RecamSample& a, const RecamSample& b) {
  return a.passage == b.passage && a.question == b.question &&
         a.options == b.options && a.label == b.label;
}

const std::array<std::string, 9>& SpecialTokens::strings() {
  static const std::array<std::string, 9> names = {
      "<pad>", "<unk>", "<s>", "</s>", "<q>",
      "</q>",  "<ent>", "</ent>", std::string(kPlaceholderToken)};
  return names;
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (text[i] == '@' && matches_placeholder_at(text, i)) {
      out.emplace_back(kPlaceholderToken);
      i += kPlaceholderToken.size();
      continue;
    }
    if (is_word_char(c)) {
      std::string word;
      while (i < text.size() && is_word_char(static_cast<unsigned char>(text[i]))) {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
        ++i;
      }
      out.push_back(std::move(word));
      continue;
    }
    out.emplace_back(1, text[i]);
    ++i;
  }
  return out;
}

std::string detokenize_words(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Vocab::Vocab() {
  for (const std::string& s : SpecialTokens::strings()) {
    to_id_.emplace(s, static_cast<int64_t>(tokens_.size()));
    tokens_.push_back(s);
  }
}

Vocab Vocab::build(const std::vector<RecamSample>& samples, int64_t min_count) {
  if (samples.empty()) throw ContractError("vocab: empty corpus");
  std::unordered_map<std::string, int64_t> freq;
  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(samples.size());
  auto take = [&](const std::string& text) {
    std::vector<std::string> toks = tokenize_words(text);
    for (const std::string& t : toks) ++freq[t];
    tokenized.push_back(std::move(toks));
  };
  for (const RecamSample& s : samples) {
    take(s.passage);
    take(s.question);
    for (const std::string& o : s.options) take(o);
  }
  Vocab v;
  for (const auto& toks : tokenized) {
    for (const std::string& t : toks) {
      if (freq[t] >= min_count) v.add(t);
    }
  }
  v.freeze();
  return v;
}

int64_t Vocab::add(const std::string& token) {
  auto it = to_id_.find(token);
  if (it != to_id_.end()) return it->second;
  if (frozen_) throw ContractError("vocab: frozen, cannot add '" + token + "'");
  const auto id = static_cast<int64_t>(tokens_.size());
  to_id_.emplace(token, id);
  tokens_.push_back(token);
  return id;
}

void Vocab::freeze() { frozen_ = true; }

bool Vocab::contains(const std::string& token) const {
  return to_id_.count(token) != 0;
}

int64_t Vocab::id(const std::string& token) const {
  auto it = to_id_.find(token);
  return it == to_id_.end() ? SpecialTokens::unk : it->second;
}

const std::string& Vocab::token(int64_t id) const {
  if (id < 0 || id >= size()) {
    throw VocabError("vocab: id " + std::to_string(id) + " outside [0, " +
                         std::to_string(size()) + ")",
                     id);
  }
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int64_t> Vocab::encode_words(const std::vector<std::string>& words) const {
  std::vector<int64_t> out;
  out.reserve(words.size());
  for (const std::string& w : words) out.push_back(id(w));
  return out;
}

std::vector<int64_t> Vocab::encode(std::string_view text) const {
  return encode_words(tokenize_words(text));
}

nlohmann::json Vocab::to_json() const {
  return nlohmann::json{{"tokens", tokens_}, {"frozen", frozen_}};
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  const auto& toks = j.at("tokens");
  Vocab v;
  for (size_t i = 0; i < toks.size(); ++i) {
    const auto word = toks[i].get<std::string>();
    if (i < static_cast<size_t>(SpecialTokens::count)) {
      if (word != SpecialTokens::strings()[i]) {
        throw ParseError("vocab: reserved slot " + std::to_string(i) +
                         " holds '" + word + "'");
      }
      continue;
    }
    v.add(word);
  }
  if (j.value("frozen", true)) v.freeze();
  return v;
}

std::vector<RecamSample> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::vector<RecamSample> out;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what(),
                       line_no);
    }
    RecamSample s;
    auto field = [&](const char* name) -> std::string {
      if (!j.contains(name) || !j[name].is_string()) {
        throw SampleError("line " + std::to_string(line_no) +
                          ": missing or non-string field '" + name + "'");
      }
      return j[name].get<std::string>();
    };
    s.passage = field("article");
    s.question = field("question");
    for (int k = 0; k < 5; ++k) {
      s.options[static_cast<size_t>(k)] = field(("option_" + std::to_string(k)).c_str());
    }
    if (j.contains("label")) {
      if (!j["label"].is_number_integer()) {
        throw SampleError("line " + std::to_string(line_no) +
                          ": label must be an integer 0..4");
      }
      const auto label = j["label"].get<int64_t>();
      if (label < 0 || label > 4) {
        throw SampleError("line " + std::to_string(line_no) + ": label " +
                          std::to_string(label) + " outside 0..4");
      }
      s.label = static_cast<int>(label);
    }
    const int64_t ph = count_placeholder_tokens(tokenize_words(s.question));
    if (ph != 1) {
      throw SampleError("line " + std::to_string(line_no) + ": question has " +
                        std::to_string(ph) + " placeholders, expected exactly 1");
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_jsonl(const std::vector<RecamSample>& samples, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  for (const RecamSample& s : samples) {
    nlohmann::ordered_json j;
    j["article"] = s.passage;
    j["question"] = s.question;
    for (int k = 0; k < 5; ++k) {
      j["option_" + std::to_string(k)] = s.options[static_cast<size_t>(k)];
    }
    if (s.labeled()) j["label"] = s.label;
    out << j.dump() << '\n';
  }
  if (!out) throw ParseError("write failed for '" + path + "'");
}

std::vector<int64_t> build_answer_sequence(const RecamSample& sample,
                                           const Vocab& vocab) {
  std::vector<int64_t> a;
  a.push_back(SpecialTokens::q_open);
  for (int64_t id : vocab.encode(sample.question)) a.push_back(id);
  a.push_back(SpecialTokens::q_close);
  for (const std::string& option : sample.options) {
    a.push_back(SpecialTokens::ent_open);
    for (int64_t id : vocab.encode(option)) a.push_back(id);
    a.push_back(SpecialTokens::ent_close);
  }
  return a;
}

std::array<int64_t, 5> ent_offsets_in_answer(const std::vector<int64_t>& answer) {
  std::array<int64_t, 5> out{};
  size_t found = 0;
  for (size_t i = 0; i < answer.size(); ++i) {
    if (answer[i] == SpecialTokens::ent_open) {
      if (found == 5) throw SampleError("answer sequence has more than 5 <ent> tokens");
      out[found++] = static_cast<int64_t>(i);
    }
  }
  if (found != 5) {
    throw SampleError("answer sequence has " + std::to_string(found) +
                      " <ent> tokens, expected 5");
  }
  return out;
}

ChunkSet build_chunks(const RecamSample& sample, const Vocab& vocab,
                      int64_t max_seq_len) {
  const std::vector<int64_t> a = build_answer_sequence(sample, vocab);
  const std::array<int64_t, 5> ent_in_a = ent_offsets_in_answer(a);
  const int64_t a_len = static_cast<int64_t>(a.size());
  const int64_t capacity = max_seq_len - a_len - 2;  // <s>, piece, </s>
  if (capacity < 1) {
    throw SampleError("sample with question '" + sample.question +
                      "' is unchunkable: answer sequence of " +
                      std::to_string(a_len) + " tokens plus framing exceeds " +
                      std::to_string(max_seq_len));
  }
  const std::vector<int64_t> passage = vocab.encode(sample.passage);
  const int64_t p_len = static_cast<int64_t>(passage.size());

  ChunkSet cs;
  int64_t offset = 0;
  do {
    const int64_t piece = std::min(capacity, p_len - offset);
    std::vector<int64_t> chunk;
    chunk.reserve(static_cast<size_t>(piece + 2 + a_len));
    chunk.push_back(SpecialTokens::bos);
    chunk.insert(chunk.end(), passage.begin() + offset, passage.begin() + offset + piece);
    chunk.push_back(SpecialTokens::eos);
    const int64_t a_start = static_cast<int64_t>(chunk.size());
    chunk.insert(chunk.end(), a.begin(), a.end());
    std::array<int64_t, 5> ents{};
    for (size_t k = 0; k < 5; ++k) ents[k] = a_start + ent_in_a[k];
    cs.chunks.push_back(std::move(chunk));
    cs.a_start.push_back(a_start);
    cs.ent_positions.push_back(ents);
    offset += piece;
  } while (offset < p_len);
  return cs;
}

ChunkSet permute_candidates(const ChunkSet& chunks,
                            const std::array<int, 5>& order) {
  std::array<bool, 5> seen{};
  for (int slot : order) {
    if (slot < 0 || slot > 4 || seen[static_cast<size_t>(slot)]) {
      throw ContractError("permute_candidates: order is not a permutation of 0..4");
    }
    seen[static_cast<size_t>(slot)] = true;
  }

  ChunkSet out;
  for (size_t l = 0; l < chunks.chunks.size(); ++l) {
    const std::vector<int64_t>& tokens = chunks.chunks[l];
    const std::array<int64_t, 5>& ents = chunks.ent_positions[l];
    const auto n = static_cast<int64_t>(tokens.size());
    for (size_t j = 0; j < 5; ++j) {
      if (ents[j] < 0 || ents[j] >= n ||
          tokens[static_cast<size_t>(ents[j])] != SpecialTokens::ent_open) {
        throw ContractError("permute_candidates: chunk " + std::to_string(l) +
                            " marker " + std::to_string(j) +
                            " does not point at a candidate marker");
      }
    }

    std::vector<int64_t> ids;
    if (l < chunks.position_ids.size() && !chunks.position_ids[l].empty()) {
      ids = chunks.position_ids[l];
      if (static_cast<int64_t>(ids.size()) != n) {
        throw ContractError("permute_candidates: chunk " + std::to_string(l) +
                            " has mismatched position ids");
      }
    } else {
      ids.resize(tokens.size());
      std::iota(ids.begin(), ids.end(), 0);
    }

    // Segment j spans [ents[j], ents[j+1]) and the last one runs to the end.
    std::vector<int64_t> new_tokens(tokens.begin(),
                                    tokens.begin() + ents[0]);
    std::vector<int64_t> new_ids(ids.begin(), ids.begin() + ents[0]);
    std::array<int64_t, 5> new_ents{};
    for (size_t j = 0; j < 5; ++j) {
      const int src = order[j];
      const int64_t begin = ents[static_cast<size_t>(src)];
      const int64_t end = src < 4 ? ents[static_cast<size_t>(src) + 1] : n;
      new_ents[j] = static_cast<int64_t>(new_tokens.size());
      new_tokens.insert(new_tokens.end(), tokens.begin() + begin,
                        tokens.begin() + end);
      new_ids.insert(new_ids.end(), ids.begin() + begin, ids.begin() + end);
    }

    out.chunks.push_back(std::move(new_tokens));
    out.a_start.push_back(chunks.a_start[l]);
    out.ent_positions.push_back(new_ents);
    out.position_ids.push_back(std::move(new_ids));
  }
  return out;
}

std::vector<RecamSample> generate_synthetic(int64_t count, int64_t vocab_size,
                                            int64_t passage_len, uint64_t seed) {
  if (count < 0) throw ConfigError("generate_synthetic: negative count");
  if (count > 0 && passage_len < 10) {
    throw ConfigError("generate_synthetic: passage_len must be at least 10");
  }
  if (count > 0 && vocab_size < 1) {
    throw ConfigError("generate_synthetic: vocab_size must be positive");
  }
  Rng rng(seed);
  std::vector<RecamSample> out;
  out.reserve(static_cast<size_t>(count));
  for (int64_t s = 0; s < count; ++s) {
    std::vector<std::string> words;
    words.reserve(static_cast<size_t>(passage_len));
    for (int64_t i = 0; i < passage_len; ++i) {
      words.push_back(filler_word(rng.uniform_int(vocab_size)));
    }
    const auto label = static_cast<size_t>(rng.uniform_int(5));
    RecamSample sample;
    sample.passage = detokenize_words(words);
    sample.question = "the story is mainly about @placeholder , the " +
                      kOrdinals[label] + " choice";
    std::array<int, 5> order = {0, 1, 2, 3, 4};
    for (int i = 4; i > 0; --i) {
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(rng.uniform_int(i + 1))]);
    }
    for (size_t slot = 0; slot < 5; ++slot) {
      sample.options[slot] = kAnswers[static_cast<size_t>(order[slot])];
    }
    sample.label = static_cast<int>(label);
    out.push_back(std::move(sample));
  }
  return out;
}

int synthetic_rule_answer(const RecamSample& sample) {
  const std::vector<std::string> words = tokenize_words(sample.question);
  for (const std::string& w : words) {
    for (size_t k = 0; k < kOrdinals.size(); ++k) {
      if (w == kOrdinals[k]) return static_cast<int>(k);
    }
  }
  return -1;
}

DatasetStats dataset_stats(const std::vector<RecamSample>& samples) {
  DatasetStats st;
  st.samples = static_cast<int64_t>(samples.size());
  double passage_total = 0.0, question_total = 0.0;
  for (const RecamSample& s : samples) {
    if (s.labeled()) {
      ++st.labeled;
      ++st.label_histogram[static_cast<size_t>(s.label)];
    }
    const auto p = static_cast<int64_t>(tokenize_words(s.passage).size());
    const auto q = static_cast<int64_t>(tokenize_words(s.question).size());
    st.passage_tokens_max = std::max(st.passage_tokens_max, p);
    st.question_tokens_max = std::max(st.question_tokens_max, q);
    passage_total += static_cast<double>(p);
    question_total += static_cast<double>(q);
  }
  if (!samples.empty()) {
    st.passage_tokens_mean = passage_total / static_cast<double>(samples.size());
    st.question_tokens_mean = question_total / static_cast<double>(samples.size());
  }
  return st;
}

}  // namespace recam::data
