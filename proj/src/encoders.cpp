#include "vlt/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

namespace vlt {

Vocabulary Vocabulary::build(const std::vector<std::string>& tokens) {
    Vocabulary v;
    v.tokens_ = {kPad, kUnk, kMask};
    for (const auto& t : tokens) {
        if (std::find(v.tokens_.begin(), v.tokens_.end(), t) == v.tokens_.end()) v.tokens_.push_back(t);
    }
    v.rebuild_index();
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("vocabulary: cannot open '" + path + "'");
    Vocabulary v;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        v.tokens_.push_back(line);
    }
    if (v.tokens_.empty() || v.tokens_[0] != kPad) {
        throw std::runtime_error("vocabulary: line 0 of '" + path + "' must be " + std::string(kPad));
    }
    v.rebuild_index();
    return v;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("vocabulary: cannot open '" + path + "' for writing");
    for (const auto& t : tokens_) os << t << '\n';
}

void Vocabulary::rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (index_.count(tokens_[i])) throw std::runtime_error("vocabulary: duplicate token '" + tokens_[i] + "'");
        index_[tokens_[i]] = static_cast<int>(i);
    }
    auto it = index_.find(kUnk);
    unk_id_ = it == index_.end() ? -1 : it->second;
    it = index_.find(kMask);
    mask_id_ = it == index_.end() ? -1 : it->second;
    if (unk_id_ < 0 || mask_id_ < 0) {
        throw std::runtime_error("vocabulary: missing special tokens (<unk>, <mask>)");
    }
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? unk_id_ : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || ch == '<' || ch == '>') {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& tok : tokenize(text)) ids.push_back(id_of(tok));
    return ids;
}

TextEncoder::TextEncoder(Rng& rng, int vocab_size, int dim, int nt) : dim_(dim), nt_(nt) {
    embedding_ = uniform_init(rng, {vocab_size, dim}, -0.1, 0.1);
    fwd_ = GruCell(rng, dim, dim);
    bwd_ = GruCell(rng, dim, dim);
    word_proj_ = Linear(rng, 2 * dim, dim);
    sent_proj_ = Linear(rng, 2 * dim, dim);
}

LanguageFeatures TextEncoder::encode(const std::vector<int>& token_ids) const {
    if (token_ids.empty()) throw std::invalid_argument("TextEncoder: empty token list");
    std::vector<int> ids = token_ids;
    if (static_cast<int>(ids.size()) > nt_) ids.resize(static_cast<std::size_t>(nt_));
    const int length = static_cast<int>(ids.size());

    Tensor embeds = gather_rows(embedding_, ids);  // [L, C]
    Tensor h_fwd = Tensor::zeros({1, dim_});
    Tensor h_bwd = Tensor::zeros({1, dim_});
    std::vector<Tensor> fwd_states(static_cast<std::size_t>(length));
    std::vector<Tensor> bwd_states(static_cast<std::size_t>(length));
    for (int t = 0; t < length; ++t) {
        h_fwd = fwd_.step(slice(embeds, 0, t, 1), h_fwd);
        fwd_states[static_cast<std::size_t>(t)] = h_fwd;
    }
    for (int t = length - 1; t >= 0; --t) {
        h_bwd = bwd_.step(slice(embeds, 0, t, 1), h_bwd);
        bwd_states[static_cast<std::size_t>(t)] = h_bwd;
    }

    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(nt_));
    for (int t = 0; t < length; ++t) {
        Tensor both = concat({fwd_states[static_cast<std::size_t>(t)], bwd_states[static_cast<std::size_t>(t)]}, 1);
        rows.push_back(word_proj_.forward(both));
    }
    if (length < nt_) rows.push_back(Tensor::zeros({nt_ - length, dim_}));

    LanguageFeatures out;
    out.f_t = concat(rows, 0);
    out.sentence = sent_proj_.forward(concat({h_fwd, h_bwd}, 1));
    out.length = length;
    out.pad_mask.assign(static_cast<std::size_t>(nt_), 0);
    for (int t = 0; t < length; ++t) out.pad_mask[static_cast<std::size_t>(t)] = 1;
    return out;
}

void TextEncoder::register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".embedding", embedding_);
    fwd_.register_params(reg, prefix + ".fwd");
    bwd_.register_params(reg, prefix + ".bwd");
    word_proj_.register_params(reg, prefix + ".word_proj");
    sent_proj_.register_params(reg, prefix + ".sent_proj");
}

ImageEncoder::ImageEncoder(Rng& rng, int dim) : dim_(dim) {
    stage1_ = Conv(rng, 3, 3, 16, 2);
    stage2_ = Conv(rng, 3, 16, 32, 2);
    stage3_ = Conv(rng, 3, 32, dim, 2);
    proj1_ = Linear(rng, 16, dim);
    proj2_ = Linear(rng, 32, dim);
    proj3_ = Linear(rng, dim, dim);
}

Tensor ImageEncoder::encode(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(2) != 3) {
        throw std::invalid_argument("ImageEncoder: expects [H, W, 3] image, got " + shape_str(image.shape()));
    }
    const int h = image.dim(0), w = image.dim(1);
    if (h % kTotalStride != 0 || w % kTotalStride != 0) {
        throw std::invalid_argument("ImageEncoder: image dims " + shape_str(image.shape()) +
                                    " must be divisible by " + std::to_string(kTotalStride));
    }
    Tensor s1 = relu(stage1_.forward(image));  // [H/2, W/2, 16]
    Tensor s2 = relu(stage2_.forward(s1));     // [H/4, W/4, 32]
    Tensor s3 = relu(stage3_.forward(s2));     // [H/8, W/8, C]
    const int oh = h / kTotalStride, ow = w / kTotalStride;

    auto project = [&](const Tensor& s, const Linear& proj) {
        Tensor r = resize_nearest(s, oh, ow);
        Tensor flat = reshape(r, {oh * ow, r.dim(2)});
        return proj.forward(flat);  // [oh*ow, C]
    };
    Tensor summed = add(add(project(s1, proj1_), project(s2, proj2_)), project(s3, proj3_));
    return reshape(summed, {oh, ow, dim_});
}

void ImageEncoder::register_params(ParamRegistry& reg, const std::string& prefix) const {
    stage1_.register_params(reg, prefix + ".stage1");
    stage2_.register_params(reg, prefix + ".stage2");
    stage3_.register_params(reg, prefix + ".stage3");
    proj1_.register_params(reg, prefix + ".proj1");
    proj2_.register_params(reg, prefix + ".proj2");
    proj3_.register_params(reg, prefix + ".proj3");
}

}  // namespace vlt
