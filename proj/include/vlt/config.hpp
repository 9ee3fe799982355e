#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vlt {

enum class FusionKind { Sdf, Tile, TileConv4 };
enum class QueryKind { Qgm, Learnt, Ft };
enum class MclFeature { Pooled, Flat };
enum class MclDenominator { Current, All };

/// Runtime configuration. Defaults are the desk-scale settings; every key can
/// be set from a plain-text key=value file and overridden by CLI flags.
struct Config {
    // model
    int dim = 32;             // feature channels C
    int heads = 2;            // attention heads
    int layers_enc = 2;       // transformer encoder layers
    int layers_dec = 2;       // transformer decoder layers
    bool pos_per_layer = false;
    int nq = 16;              // query count
    int nt = 15;              // padded sentence length
    FusionKind fusion = FusionKind::Sdf;
    QueryKind query_kind = QueryKind::Qgm;
    bool qgm_share_wv = true;

    // masked contrastive learning
    double mcl_lambda = 0.1;
    double mcl_tau = 0.1;
    int mcl_nm = 3;           // only sentences longer than this are masked
    bool mcl_mask_words = true;
    MclFeature mcl_feature = MclFeature::Pooled;
    MclDenominator mcl_denominator = MclDenominator::Current;
    int mcl_nso = -1;         // SISO cap; -1 = uncapped (batch size)
    int mcl_ndo = -1;         // SIDO cap; -1 = floor(0.10 * batch)

    // training
    int batch_size = 12;
    int steps = 500;
    double lr = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int checkpoint_every = 0;  // 0 = final checkpoint only

    // evaluation
    double mask_threshold = 0.5;

    std::uint64_t seed = 1;

    void set(const std::string& key, const std::string& value);
    void load_file(const std::string& path);
    // Canonical "key=value" lines, sorted by key; basis of the fingerprint.
    std::vector<std::string> canonical_lines() const;
    std::uint64_t fingerprint() const;
};

std::string to_string(FusionKind k);
std::string to_string(QueryKind k);
std::string to_string(MclFeature k);
std::string to_string(MclDenominator k);

}  // namespace vlt
