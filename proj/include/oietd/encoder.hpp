// Encoder abstraction.
//
// Two implementations ship with the project:
//  * ToyEncoder        — hashed subword embeddings plus one self-attention
//                        layer, fully trainable with hand-derived gradients.
//                        Used by the test and acceptance suites and any
//                        desk-scale experiment.
//  * FeatureFileEncoder — frozen adapter over per-subword hidden states
//                        exported by an external pretrained transformer
//                        (e.g. RoBERTa-base). Supports inference and head
//                        training; no in-process encoder fine-tuning or MLM.
#pragma once

#include <any>
#include <cmath>
#include <fstream>
#include <memory>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "oietd/errors.hpp"
#include "oietd/param.hpp"
#include "oietd/rng.hpp"
#include "oietd/subword.hpp"

namespace oietd {

class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual int hidden_size() const = 0;
  virtual int vocab_size() const = 0;
  virtual bool trainable() const = 0;
  virtual bool supports_mlm() const = 0;

  // Returns per-subword hidden states, one row per subword. `cache` receives
  // whatever backward() needs; callers treat it as opaque.
  virtual Eigen::MatrixXd encode(const SubwordSequence& seq, std::any& cache,
                                 const std::string& sentence_key = {}) = 0;

  // Accumulates parameter gradients for d(loss)/d(hidden). No-op for frozen
  // encoders.
  virtual void backward(const SubwordSequence& seq, const std::any& cache,
                        const Eigen::MatrixXd& d_hidden) = 0;

  virtual std::vector<Param*> params() = 0;

  virtual void save(std::ostream& out) const = 0;
  virtual void load(std::istream& in) = 0;
};

// ---------------------------------------------------------------------------
// ToyEncoder

struct ToyEncoderConfig {
  int vocab_size = 512;
  int hidden_size = 32;
  int max_subwords = 256;
};

class ToyEncoder final : public Encoder {
 public:
  ToyEncoder(const ToyEncoderConfig& config, std::uint64_t seed) : config_(config) {
    Rng rng(seed);
    auto init = [&rng](const std::string& name, int rows, int cols, double scale) {
      Eigen::MatrixXd m(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, scale);
      return Param(name, std::move(m));
    };
    const int h = config.hidden_size;
    const double ws = 1.0 / std::sqrt(static_cast<double>(h));
    embed_ = init("encoder.embed", config.vocab_size, h, 0.1);
    wq_ = init("encoder.wq", h, h, ws);
    wk_ = init("encoder.wk", h, h, ws);
    wv_ = init("encoder.wv", h, h, ws);
    wo_ = init("encoder.wo", h, h, ws);
    w1_ = init("encoder.w1", h, h, ws);
    b1_ = Param("encoder.b1", Eigen::MatrixXd::Zero(1, h));
  }

  int hidden_size() const override { return config_.hidden_size; }
  int vocab_size() const override { return config_.vocab_size; }
  bool trainable() const override { return true; }
  bool supports_mlm() const override { return true; }
  int max_subwords() const { return config_.max_subwords; }
  long truncated_count() const { return truncated_; }

  Eigen::MatrixXd encode(const SubwordSequence& seq, std::any& cache,
                         const std::string& = {}) override {
    SubwordSequence trunc = seq;
    if (static_cast<int>(trunc.ids.size()) > config_.max_subwords) {
      trunc.ids.resize(static_cast<std::size_t>(config_.max_subwords));
      trunc.word_index.resize(static_cast<std::size_t>(config_.max_subwords));
      ++truncated_;
    }
    const int t = static_cast<int>(trunc.ids.size());
    const int h = config_.hidden_size;

    Cache c;
    c.x.resize(t, h);
    for (int i = 0; i < t; ++i)
      c.x.row(i) = embed_.value.row(trunc.ids[static_cast<std::size_t>(i)]) + positional(i, h);

    const double scale = 1.0 / std::sqrt(static_cast<double>(h));
    c.q = c.x * wq_.value;
    c.k = c.x * wk_.value;
    c.xv = c.x * wv_.value;
    Eigen::MatrixXd scores = (c.q * c.k.transpose()) * scale;
    c.attn.resize(t, t);
    for (int i = 0; i < t; ++i) {
      const double m = scores.row(i).maxCoeff();
      Eigen::ArrayXd e = (scores.row(i).array() - m).exp();
      c.attn.row(i) = (e / e.sum()).matrix().transpose();
    }
    c.av = c.attn * c.xv;
    c.u = c.x + c.av * wo_.value;
    c.out = (c.u * w1_.value + Eigen::MatrixXd::Ones(t, 1) * b1_.value).array().tanh();
    Eigen::MatrixXd result = c.out;
    cache = std::move(c);
    return result;
  }

  void backward(const SubwordSequence& seq, const std::any& cache,
                const Eigen::MatrixXd& d_hidden) override {
    const Cache& c = std::any_cast<const Cache&>(cache);
    const int t = static_cast<int>(c.x.rows());
    const int h = config_.hidden_size;
    const double scale = 1.0 / std::sqrt(static_cast<double>(h));

    // tanh layer
    Eigen::MatrixXd dp = d_hidden.array() * (1.0 - c.out.array().square());
    w1_.grad += c.u.transpose() * dp;
    b1_.grad += dp.colwise().sum();
    Eigen::MatrixXd du = dp * w1_.value.transpose();

    // residual + output projection
    Eigen::MatrixXd dx = du;
    wo_.grad += c.av.transpose() * du;
    Eigen::MatrixXd dav = du * wo_.value.transpose();

    // attention
    Eigen::MatrixXd dattn = dav * c.xv.transpose();
    Eigen::MatrixXd dxv = c.attn.transpose() * dav;
    Eigen::MatrixXd dscores(t, t);
    for (int i = 0; i < t; ++i) {
      const double dot = dattn.row(i).dot(c.attn.row(i));
      dscores.row(i) = c.attn.row(i).array() * (dattn.row(i).array() - dot);
    }
    Eigen::MatrixXd dq = dscores * c.k * scale;
    Eigen::MatrixXd dk = dscores.transpose() * c.q * scale;

    wq_.grad += c.x.transpose() * dq;
    wk_.grad += c.x.transpose() * dk;
    wv_.grad += c.x.transpose() * dxv;
    dx += dq * wq_.value.transpose() + dk * wk_.value.transpose() + dxv * wv_.value.transpose();

    for (int i = 0; i < t; ++i)
      embed_.grad.row(seq.ids[static_cast<std::size_t>(i)]) += dx.row(i);
  }

  std::vector<Param*> params() override {
    return {&embed_, &wq_, &wk_, &wv_, &wo_, &w1_, &b1_};
  }

  void save(std::ostream& out) const override {
    nlohmann::json header = {{"type", "toy"},
                             {"vocab_size", config_.vocab_size},
                             {"hidden_size", config_.hidden_size},
                             {"max_subwords", config_.max_subwords}};
    const std::string hs = header.dump();
    const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const Param* p : const_cast<ToyEncoder*>(this)->params()) write_matrix(out, p->value);
  }

  void load(std::istream& in) override {
    std::uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    in.read(hs.data(), hlen);
    const auto header = nlohmann::json::parse(hs);
    if (header.at("type") != "toy") throw DataError("checkpoint encoder type mismatch");
    config_.vocab_size = header.at("vocab_size").get<int>();
    config_.hidden_size = header.at("hidden_size").get<int>();
    config_.max_subwords = header.at("max_subwords").get<int>();
    for (Param* p : params()) read_matrix(in, p->value);
    for (Param* p : params()) p->grad = Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols());
  }

  static void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    const std::int64_t rows = m.rows(), cols = m.cols();
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < cols; ++c) {
        const double v = m(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
  }

  static void read_matrix(std::istream& in, Eigen::MatrixXd& m) {
    std::int64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    if (!in || rows < 0 || cols < 0) throw DataError("corrupt checkpoint matrix header");
    m.resize(rows, cols);
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < cols; ++c) {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        m(r, c) = v;
      }
    if (!in) throw DataError("corrupt checkpoint matrix payload");
  }

 private:
  struct Cache {
    Eigen::MatrixXd x, q, k, xv, attn, av, u, out;
  };

  static Eigen::RowVectorXd positional(int pos, int h) {
    Eigen::RowVectorXd v(h);
    for (int j = 0; j < h; ++j) {
      const double rate = std::pow(10000.0, -2.0 * (j / 2) / static_cast<double>(h));
      v(j) = (j % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
    return 0.1 * v;
  }

  ToyEncoderConfig config_;
  Param embed_, wq_, wk_, wv_, wo_, w1_, b1_;
  long truncated_ = 0;
};

// ---------------------------------------------------------------------------
// FeatureFileEncoder
//
// Reads a JSONL file mapping sentence ids to per-subword hidden-state rows:
//   {"sentence_id": str, "hidden": [[...H floats...], ...]}
// Frozen: backward is a no-op and there are no trainable parameters.

class FeatureFileEncoder final : public Encoder {
 public:
  FeatureFileEncoder(const std::string& path, int hidden_size) : hidden_size_(hidden_size) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open feature file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
      const auto rows = j.at("hidden").get<std::vector<std::vector<double>>>();
      Eigen::MatrixXd m(static_cast<int>(rows.size()), hidden_size);
      for (int r = 0; r < m.rows(); ++r) {
        if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != hidden_size)
          throw ParseError(path + ": hidden row width != " + std::to_string(hidden_size));
        for (int c = 0; c < hidden_size; ++c)
          m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      }
      features_[j.at("sentence_id").get<std::string>()] = std::move(m);
    }
  }

  int hidden_size() const override { return hidden_size_; }
  int vocab_size() const override { return 0; }
  bool trainable() const override { return false; }
  bool supports_mlm() const override { return false; }

  Eigen::MatrixXd encode(const SubwordSequence& seq, std::any& cache,
                         const std::string& sentence_key = {}) override {
    cache = std::monostate{};
    auto it = features_.find(sentence_key);
    if (it == features_.end())
      throw DataError("feature file has no entry for sentence " + sentence_key);
    if (it->second.rows() != static_cast<long>(seq.ids.size()))
      throw DataError("feature row count mismatch for sentence " + sentence_key);
    return it->second;
  }

  void backward(const SubwordSequence&, const std::any&, const Eigen::MatrixXd&) override {}

  std::vector<Param*> params() override { return {}; }

  void save(std::ostream& out) const override {
    nlohmann::json header = {{"type", "feature-file"}, {"hidden_size", hidden_size_}};
    const std::string hs = header.dump();
    const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  }

  void load(std::istream& in) override {
    std::uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    in.read(hs.data(), hlen);
  }

 private:
  int hidden_size_;
  std::unordered_map<std::string, Eigen::MatrixXd> features_;
};

}  // namespace oietd
