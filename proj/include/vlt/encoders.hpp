#pragma once

#include <map>
#include <string>
#include <vector>

#include "vlt/nn.hpp"

namespace vlt {

/// Token table with fixed special ids. Id 0 is always PAD.
class Vocabulary {
public:
    static constexpr const char* kPad = "<pad>";
    static constexpr const char* kUnk = "<unk>";
    static constexpr const char* kMask = "<mask>";

    // Builds from regular tokens; specials are prepended automatically.
    static Vocabulary build(const std::vector<std::string>& tokens);
    // Plain text, one token per line, line number = id; line 0 must be PAD.
    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    int pad_id() const { return 0; }
    int unk_id() const { return unk_id_; }
    int mask_id() const { return mask_id_; }
    int size() const { return static_cast<int>(tokens_.size()); }

    int id_of(const std::string& token) const;  // UNK for unseen tokens
    const std::string& token_of(int id) const;

    // Lowercases, splits on whitespace and punctuation, maps to ids.
    std::vector<int> encode(const std::string& text) const;
    static std::vector<std::string> tokenize(const std::string& text);

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
    int unk_id_ = -1;
    int mask_id_ = -1;

    void rebuild_index();
};

/// Per-word features F_t with the zero-padding contract plus the whole
/// sentence feature.
struct LanguageFeatures {
    Tensor f_t;        // [nt, C]; rows >= length are exactly zero
    Tensor sentence;   // [1, C]
    int length = 0;    // actual word count, <= nt
    std::vector<unsigned char> pad_mask;  // [nt], 1 where a real word is present
};

/// Embedding lookup + single bidirectional gated recurrent layer; per-word
/// features are the projected concatenation of both direction states.
class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(Rng& rng, int vocab_size, int dim, int nt);

    // token_ids must be non-empty; ids beyond nt are truncated.
    LanguageFeatures encode(const std::vector<int>& token_ids) const;

    int nt() const { return nt_; }
    void register_params(ParamRegistry& reg, const std::string& prefix) const;

private:
    Tensor embedding_;  // [V, C]
    GruCell fwd_, bwd_;
    Linear word_proj_;  // 2C -> C
    Linear sent_proj_;  // 2C -> C
    int dim_ = 0;
    int nt_ = 0;
};

/// Three stride-2 conv stages; the stage outputs are resized to the coarsest
/// grid, projected to a common width and summed into F_vr.
class ImageEncoder {
public:
    static constexpr int kTotalStride = 8;

    ImageEncoder() = default;
    ImageEncoder(Rng& rng, int dim);

    // image: [H, W, 3] in [0,1]; H and W must be divisible by kTotalStride.
    // Returns F_vr of shape [H/8, W/8, C].
    Tensor encode(const Tensor& image) const;

    void register_params(ParamRegistry& reg, const std::string& prefix) const;

private:
    Conv stage1_, stage2_, stage3_;
    Linear proj1_, proj2_, proj3_;
    int dim_ = 0;
};

}  // namespace vlt
