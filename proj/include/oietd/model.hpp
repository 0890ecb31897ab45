// ModelBundle: the vanilla, implicit and explicit token classification
// designs over a pluggable encoder, plus the MLM head.
//
// vanilla   — encoder + TD head.
// implicit  — TD head reads [hidden ; relation_embedding[rel_tag]] per token;
//             the 3-row relation embedding matrix trains from TD loss and is
//             a read-only lookup at inference.
// explicit  — shared encoder, separate TD and RD heads; training averages
//             the two losses per mini-batch; inference uses the TD head only.
#pragma once

#include <any>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oietd/corpus.hpp"
#include "oietd/encoder.hpp"
#include "oietd/errors.hpp"
#include "oietd/param.hpp"
#include "oietd/subword.hpp"
#include "oietd/tagging_eval.hpp"

namespace oietd {

enum class ModelDesign { kVanilla, kImplicit, kExplicit };

inline std::string to_string(ModelDesign d) {
  switch (d) {
    case ModelDesign::kVanilla: return "vanilla";
    case ModelDesign::kImplicit: return "implicit";
    case ModelDesign::kExplicit: return "explicit";
  }
  return "vanilla";
}

inline ModelDesign design_from_string(const std::string& s) {
  if (s == "vanilla") return ModelDesign::kVanilla;
  if (s == "implicit") return ModelDesign::kImplicit;
  if (s == "explicit") return ModelDesign::kExplicit;
  throw ConfigError("unknown model design: " + s);
}

enum class TaskKind { kTd, kRd };

constexpr int kNumTags = 3;  // O, B, I

// One sentence prepared for the model: subwords plus word-level gold TD tags
// and silver relation tags (empty relation list means all-O).
struct ModelInput {
  std::string sentence_id;
  SubwordSequence sub;
  std::vector<Tag> word_td_tags;
  std::vector<Tag> word_rel_tags;
};

inline ModelInput make_model_input(const Sentence& s, const SubwordTokenizer& tokenizer) {
  ModelInput in;
  in.sentence_id = s.sentence_id;
  in.sub = tokenizer.tokenize(s.tokens);
  const int n = static_cast<int>(s.tokens.size());
  in.word_td_tags = encode_iob2(s.trigger_spans, n, TagType::kTrigger).tags;
  in.word_rel_tags = encode_iob2(s.relation_spans, n, TagType::kRelation).tags;
  return in;
}

struct MlmStats {
  double loss = 0.0;
  long selected = 0;
  long masked = 0;
  long randomized = 0;
  long kept = 0;
  long skipped_sentences = 0;
};

class ModelBundle {
 public:
  ModelBundle(ModelDesign design, std::shared_ptr<Encoder> encoder, int rel_embed_dim,
              bool mlm_enabled, std::uint64_t seed)
      : design_(design), encoder_(std::move(encoder)), d_(rel_embed_dim), mlm_enabled_(mlm_enabled) {
    Rng rng(seed);
    const int h = encoder_->hidden_size();
    const int td_in = design_ == ModelDesign::kImplicit ? h + d_ : h;
    td_w_ = init_linear(rng, "td_head.weight", td_in, kNumTags);
    td_b_ = Param("td_head.bias", Eigen::MatrixXd::Zero(1, kNumTags));
    if (design_ == ModelDesign::kExplicit) {
      rd_w_ = init_linear(rng, "rd_head.weight", h, kNumTags);
      rd_b_ = Param("rd_head.bias", Eigen::MatrixXd::Zero(1, kNumTags));
    }
    if (design_ == ModelDesign::kImplicit) {
      Eigen::MatrixXd e(kNumTags, d_);
      for (int r = 0; r < kNumTags; ++r)
        for (int c = 0; c < d_; ++c) e(r, c) = rng.uniform(-0.1, 0.1);
      rel_embed_ = Param("rel_embed", std::move(e));
    }
    if (mlm_enabled_) {
      if (!encoder_->supports_mlm())
        throw ConfigError("MLM requested but the encoder does not support it");
      mlm_w_ = init_linear(rng, "mlm_head.weight", h, encoder_->vocab_size());
      mlm_b_ = Param("mlm_head.bias", Eigen::MatrixXd::Zero(1, encoder_->vocab_size()));
    }
  }

  ModelDesign design() const { return design_; }
  int rel_embed_dim() const { return d_; }
  bool mlm_enabled() const { return mlm_enabled_; }
  Encoder& encoder() { return *encoder_; }
  std::shared_ptr<Encoder> encoder_ptr() const { return encoder_; }
  Param& rel_embed() { return rel_embed_; }
  Param& td_head_weight() { return td_w_; }
  Param& td_head_bias() { return td_b_; }
  Param& rd_head_weight() { return rd_w_; }
  Param& rd_head_bias() { return rd_b_; }

  // All trainable parameters (encoder first, then heads/embeddings).
  std::vector<Param*> params() {
    std::vector<Param*> ps = encoder_->params();
    ps.push_back(&td_w_);
    ps.push_back(&td_b_);
    if (design_ == ModelDesign::kExplicit) {
      ps.push_back(&rd_w_);
      ps.push_back(&rd_b_);
    }
    if (design_ == ModelDesign::kImplicit) ps.push_back(&rel_embed_);
    if (mlm_enabled_) {
      ps.push_back(&mlm_w_);
      ps.push_back(&mlm_b_);
    }
    return ps;
  }

  void set_rel_embed_lr(double lr_e) {
    if (design_ == ModelDesign::kImplicit) rel_embed_.lr_override = lr_e;
  }

  // Mean cross-entropy over first-subword positions of `items` for one task.
  // When `accumulate_grads` is set, parameter gradients are accumulated,
  // scaled so the contribution equals weight * d(mean loss)/d(param).
  double task_loss(const std::vector<const ModelInput*>& items, TaskKind task,
                   double weight, bool accumulate_grads) {
    if (task == TaskKind::kRd && design_ != ModelDesign::kExplicit)
      throw ConfigError("RD task is only defined for the explicit design");

    struct ItemState {
      std::any enc_cache;
      Eigen::MatrixXd hidden;
      std::vector<int> rows;      // first-subword rows within truncation
      std::vector<int> targets;   // tag index per row
      std::vector<int> rel_rows;  // relation-embedding row per row (implicit)
      Eigen::MatrixXd probs;      // softmax per counted row
    };
    std::vector<ItemState> states(items.size());

    Param& w = task == TaskKind::kTd ? td_w_ : rd_w_;
    Param& b = task == TaskKind::kTd ? td_b_ : rd_b_;
    const bool concat = task == TaskKind::kTd && design_ == ModelDesign::kImplicit;
    const int h = encoder_->hidden_size();

    double loss_sum = 0.0;
    long positions = 0;
    for (std::size_t n = 0; n < items.size(); ++n) {
      const ModelInput& item = *items[n];
      ItemState& st = states[n];
      st.hidden = encoder_->encode(item.sub, st.enc_cache, item.sentence_id);
      const int t_eff = static_cast<int>(st.hidden.rows());
      if (concat && item.word_rel_tags.size() != item.word_td_tags.size())
        throw DataError("implicit design: missing relation tags for " + item.sentence_id);

      const auto& tags = task == TaskKind::kTd ? item.word_td_tags : item.word_rel_tags;
      int prev_word = -1;
      for (int i = 0; i < t_eff; ++i) {
        const int word = item.sub.word_index[static_cast<std::size_t>(i)];
        if (word == prev_word) continue;
        prev_word = word;
        st.rows.push_back(i);
        st.targets.push_back(static_cast<int>(tags[static_cast<std::size_t>(word)]));
        if (concat)
          st.rel_rows.push_back(
              static_cast<int>(item.word_rel_tags[static_cast<std::size_t>(word)]));
      }

      const int m = static_cast<int>(st.rows.size());
      st.probs.resize(m, kNumTags);
      for (int r = 0; r < m; ++r) {
        Eigen::RowVectorXd z(concat ? h + d_ : h);
        z.head(h) = st.hidden.row(st.rows[static_cast<std::size_t>(r)]);
        if (concat) z.tail(d_) = rel_embed_.value.row(st.rel_rows[static_cast<std::size_t>(r)]);
        Eigen::RowVectorXd logits = z * w.value + b.value;
        const double mx = logits.maxCoeff();
        Eigen::ArrayXd e = (logits.array() - mx).exp();
        st.probs.row(r) = (e / e.sum()).matrix().transpose();
        loss_sum -= std::log(
            std::max(st.probs(r, st.targets[static_cast<std::size_t>(r)]), 1e-300));
      }
      positions += m;
    }
    if (positions == 0) return 0.0;
    const double mean_loss = loss_sum / static_cast<double>(positions);

    if (accumulate_grads) {
      const double scale = weight / static_cast<double>(positions);
      for (std::size_t n = 0; n < items.size(); ++n) {
        const ModelInput& item = *items[n];
        ItemState& st = states[n];
        const int m = static_cast<int>(st.rows.size());
        Eigen::MatrixXd d_hidden = Eigen::MatrixXd::Zero(st.hidden.rows(), h);
        for (int r = 0; r < m; ++r) {
          Eigen::RowVectorXd dlogits = st.probs.row(r);
          dlogits(st.targets[static_cast<std::size_t>(r)]) -= 1.0;
          dlogits *= scale;

          Eigen::RowVectorXd z(concat ? h + d_ : h);
          z.head(h) = st.hidden.row(st.rows[static_cast<std::size_t>(r)]);
          if (concat) z.tail(d_) = rel_embed_.value.row(st.rel_rows[static_cast<std::size_t>(r)]);

          w.grad += z.transpose() * dlogits;
          b.grad += dlogits;
          Eigen::RowVectorXd dz = dlogits * w.value.transpose();
          d_hidden.row(st.rows[static_cast<std::size_t>(r)]) += dz.head(h);
          if (concat)
            rel_embed_.grad.row(st.rel_rows[static_cast<std::size_t>(r)]) += dz.tail(d_);
        }
        encoder_->backward(item.sub, st.enc_cache, d_hidden);
      }
    }
    return mean_loss;
  }

  // Word-level TD prediction. Words truncated away come out as O; stray I
  // tags are repaired to B.
  TagSequence predict_td(const ModelInput& item) {
    std::any cache;
    const Eigen::MatrixXd hidden = encoder_->encode(item.sub, cache, item.sentence_id);
    const int t_eff = static_cast<int>(hidden.rows());
    const int h = encoder_->hidden_size();
    const bool concat = design_ == ModelDesign::kImplicit;

    TagSequence out;
    out.type = TagType::kTrigger;
    out.tags.assign(item.word_td_tags.size(), Tag::kO);
    int prev_word = -1;
    for (int i = 0; i < t_eff; ++i) {
      const int word = item.sub.word_index[static_cast<std::size_t>(i)];
      if (word == prev_word) continue;
      prev_word = word;
      Eigen::RowVectorXd z(concat ? h + d_ : h);
      z.head(h) = hidden.row(i);
      if (concat) {
        if (item.word_rel_tags.size() != item.word_td_tags.size())
          throw DataError("implicit design: missing relation tags for " + item.sentence_id);
        z.tail(d_) = rel_embed_.value.row(
            static_cast<int>(item.word_rel_tags[static_cast<std::size_t>(word)]));
      }
      Eigen::RowVectorXd logits = z * td_w_.value + td_b_.value;
      int best = 0;
      logits.maxCoeff(&best);
      out.tags[static_cast<std::size_t>(word)] = static_cast<Tag>(best);
    }
    return repair_iob2(out);
  }

  // Raw TD logits for one item (contract tests).
  Eigen::MatrixXd td_logits(const ModelInput& item) {
    std::any cache;
    const Eigen::MatrixXd hidden = encoder_->encode(item.sub, cache, item.sentence_id);
    const int h = encoder_->hidden_size();
    const bool concat = design_ == ModelDesign::kImplicit;
    Eigen::MatrixXd logits(hidden.rows(), kNumTags);
    for (int i = 0; i < hidden.rows(); ++i) {
      Eigen::RowVectorXd z(concat ? h + d_ : h);
      z.head(h) = hidden.row(i);
      if (concat) {
        const int word = item.sub.word_index[static_cast<std::size_t>(i)];
        z.tail(d_) = rel_embed_.value.row(
            static_cast<int>(item.word_rel_tags[static_cast<std::size_t>(word)]));
      }
      logits.row(i) = z * td_w_.value + td_b_.value;
    }
    return logits;
  }

  // BERT-style masking: positions selected i.i.d. with mask_prob; of those,
  // 80% become the mask token, 10% a random vocabulary token, 10% stay.
  // Loss is averaged over selected positions; gradient contribution is
  // weight * d(mean loss)/d(param).
  MlmStats mlm_step(const std::vector<const ModelInput*>& items, Rng& rng,
                    double mask_prob = 0.15, double weight = 1.0,
                    bool accumulate_grads = true) {
    if (!mlm_enabled_) throw ConfigError("mlm_step on a bundle without MLM");
    MlmStats stats;
    const int vocab = encoder_->vocab_size();
    const int h = encoder_->hidden_size();

    struct ItemState {
      SubwordSequence masked;
      std::any enc_cache;
      Eigen::MatrixXd hidden;
      std::vector<int> rows;
      std::vector<int> targets;
      Eigen::MatrixXd probs;
    };
    std::vector<ItemState> states(items.size());

    double loss_sum = 0.0;
    for (std::size_t n = 0; n < items.size(); ++n) {
      const ModelInput& item = *items[n];
      ItemState& st = states[n];
      st.masked = item.sub;
      std::vector<std::pair<int, int>> selected;  // (position, original id)
      for (std::size_t i = 0; i < st.masked.ids.size(); ++i) {
        if (!rng.bernoulli(mask_prob)) continue;
        const int original = st.masked.ids[i];
        const double r = rng.uniform();
        if (r < 0.8) {
          st.masked.ids[i] = kMaskTokenId;
          ++stats.masked;
        } else if (r < 0.9) {
          st.masked.ids[i] = static_cast<int>(rng.uniform_int(kNumSpecialTokens, vocab - 1));
          ++stats.randomized;
        } else {
          ++stats.kept;
        }
        selected.emplace_back(static_cast<int>(i), original);
      }
      if (selected.empty()) {
        ++stats.skipped_sentences;
        continue;
      }
      st.hidden = encoder_->encode(st.masked, st.enc_cache, item.sentence_id);
      const int t_eff = static_cast<int>(st.hidden.rows());
      for (const auto& [pos, original] : selected) {
        if (pos >= t_eff) continue;
        st.rows.push_back(pos);
        st.targets.push_back(original);
      }
      const int m = static_cast<int>(st.rows.size());
      st.probs.resize(m, vocab);
      for (int r = 0; r < m; ++r) {
        Eigen::RowVectorXd logits =
            st.hidden.row(st.rows[static_cast<std::size_t>(r)]) * mlm_w_.value + mlm_b_.value;
        const double mx = logits.maxCoeff();
        Eigen::ArrayXd e = (logits.array() - mx).exp();
        st.probs.row(r) = (e / e.sum()).matrix().transpose();
        loss_sum -= std::log(
            std::max(st.probs(r, st.targets[static_cast<std::size_t>(r)]), 1e-300));
      }
      stats.selected += m;
    }
    if (stats.selected == 0) return stats;
    stats.loss = loss_sum / static_cast<double>(stats.selected);

    if (accumulate_grads) {
      const double scale = weight / static_cast<double>(stats.selected);
      for (std::size_t n = 0; n < items.size(); ++n) {
        ItemState& st = states[n];
        if (st.rows.empty()) continue;
        Eigen::MatrixXd d_hidden = Eigen::MatrixXd::Zero(st.hidden.rows(), h);
        for (int r = 0; r < static_cast<int>(st.rows.size()); ++r) {
          Eigen::RowVectorXd dlogits = st.probs.row(r);
          dlogits(st.targets[static_cast<std::size_t>(r)]) -= 1.0;
          dlogits *= scale;
          mlm_w_.grad +=
              st.hidden.row(st.rows[static_cast<std::size_t>(r)]).transpose() * dlogits;
          mlm_b_.grad += dlogits;
          d_hidden.row(st.rows[static_cast<std::size_t>(r)]) +=
              dlogits * mlm_w_.value.transpose();
        }
        encoder_->backward(st.masked, st.enc_cache, d_hidden);
      }
    }
    return stats;
  }

  void save_params(std::ostream& out) const {
    encoder_->save(out);
    auto& self = const_cast<ModelBundle&>(*this);
    for (Param* p : self.head_params()) ToyEncoder::write_matrix(out, p->value);
  }

  void load_params(std::istream& in) {
    encoder_->load(in);
    for (Param* p : head_params()) {
      ToyEncoder::read_matrix(in, p->value);
      p->grad = Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols());
    }
  }

 private:
  std::vector<Param*> head_params() {
    std::vector<Param*> ps{&td_w_, &td_b_};
    if (design_ == ModelDesign::kExplicit) {
      ps.push_back(&rd_w_);
      ps.push_back(&rd_b_);
    }
    if (design_ == ModelDesign::kImplicit) ps.push_back(&rel_embed_);
    if (mlm_enabled_) {
      ps.push_back(&mlm_w_);
      ps.push_back(&mlm_b_);
    }
    return ps;
  }

  static Param init_linear(Rng& rng, const std::string& name, int in_dim, int out_dim) {
    Eigen::MatrixXd m(in_dim, out_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (int r = 0; r < in_dim; ++r)
      for (int c = 0; c < out_dim; ++c) m(r, c) = rng.normal(0.0, scale);
    return Param(name, std::move(m));
  }

  ModelDesign design_;
  std::shared_ptr<Encoder> encoder_;
  int d_ = 0;
  bool mlm_enabled_ = false;
  Param td_w_, td_b_, rd_w_, rd_b_, rel_embed_, mlm_w_, mlm_b_;
};

}  // namespace oietd
