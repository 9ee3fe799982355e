#include "vlt/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vlt/common.hpp"

namespace vlt {

namespace {

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: cannot parse boolean '" + v + "'");
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::string to_string(FusionKind k) {
    switch (k) {
        case FusionKind::Sdf: return "sdf";
        case FusionKind::Tile: return "tile";
        case FusionKind::TileConv4: return "tile_conv4";
    }
    return "?";
}

std::string to_string(QueryKind k) {
    switch (k) {
        case QueryKind::Qgm: return "qgm";
        case QueryKind::Learnt: return "learnt";
        case QueryKind::Ft: return "ft";
    }
    return "?";
}

std::string to_string(MclFeature k) { return k == MclFeature::Pooled ? "pooled" : "flat"; }

std::string to_string(MclDenominator k) { return k == MclDenominator::Current ? "current" : "all"; }

void Config::set(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (key == "model.dim") dim = std::stoi(v);
    else if (key == "model.heads") heads = std::stoi(v);
    else if (key == "transformer.layers_enc") layers_enc = std::stoi(v);
    else if (key == "transformer.layers_dec") layers_dec = std::stoi(v);
    else if (key == "pos.per_layer") pos_per_layer = parse_bool(v);
    else if (key == "model.nq") nq = std::stoi(v);
    else if (key == "text.nt") nt = std::stoi(v);
    else if (key == "fusion.kind") {
        if (v == "sdf") fusion = FusionKind::Sdf;
        else if (v == "tile") fusion = FusionKind::Tile;
        else if (v == "tile_conv4") fusion = FusionKind::TileConv4;
        else throw std::invalid_argument("config: fusion.kind must be sdf|tile|tile_conv4, got '" + v + "'");
    } else if (key == "query.kind") {
        if (v == "qgm") query_kind = QueryKind::Qgm;
        else if (v == "learnt") query_kind = QueryKind::Learnt;
        else if (v == "ft") query_kind = QueryKind::Ft;
        else throw std::invalid_argument("config: query.kind must be qgm|learnt|ft, got '" + v + "'");
    } else if (key == "qgm.share_wv") qgm_share_wv = parse_bool(v);
    else if (key == "mcl.lambda") mcl_lambda = std::stod(v);
    else if (key == "mcl.tau") mcl_tau = std::stod(v);
    else if (key == "mcl.nm") mcl_nm = std::stoi(v);
    else if (key == "mcl.mask_words") mcl_mask_words = parse_bool(v);
    else if (key == "mcl.feature") {
        if (v == "pooled") mcl_feature = MclFeature::Pooled;
        else if (v == "flat") mcl_feature = MclFeature::Flat;
        else throw std::invalid_argument("config: mcl.feature must be pooled|flat, got '" + v + "'");
    } else if (key == "mcl.denominator") {
        if (v == "current") mcl_denominator = MclDenominator::Current;
        else if (v == "all") mcl_denominator = MclDenominator::All;
        else throw std::invalid_argument("config: mcl.denominator must be current|all, got '" + v + "'");
    } else if (key == "mcl.nso") mcl_nso = std::stoi(v);
    else if (key == "mcl.ndo") mcl_ndo = std::stoi(v);
    else if (key == "train.batch") batch_size = std::stoi(v);
    else if (key == "train.steps") steps = std::stoi(v);
    else if (key == "train.lr") lr = std::stod(v);
    else if (key == "train.beta1") adam_beta1 = std::stod(v);
    else if (key == "train.beta2") adam_beta2 = std::stod(v);
    else if (key == "train.eps") adam_eps = std::stod(v);
    else if (key == "train.checkpoint_every") checkpoint_every = std::stoi(v);
    else if (key == "eval.threshold") mask_threshold = std::stod(v);
    else if (key == "seed") seed = std::stoull(v);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

void Config::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config: " + path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
}

std::vector<std::string> Config::canonical_lines() const {
    auto num = [](double x) {
        std::ostringstream os;
        os << x;
        return os.str();
    };
    std::vector<std::string> lines = {
        "eval.threshold=" + num(mask_threshold),
        "fusion.kind=" + to_string(fusion),
        "mcl.denominator=" + to_string(mcl_denominator),
        "mcl.feature=" + to_string(mcl_feature),
        "mcl.lambda=" + num(mcl_lambda),
        "mcl.mask_words=" + std::string(mcl_mask_words ? "true" : "false"),
        "mcl.ndo=" + std::to_string(mcl_ndo),
        "mcl.nm=" + std::to_string(mcl_nm),
        "mcl.nso=" + std::to_string(mcl_nso),
        "mcl.tau=" + num(mcl_tau),
        "model.dim=" + std::to_string(dim),
        "model.heads=" + std::to_string(heads),
        "model.nq=" + std::to_string(nq),
        "pos.per_layer=" + std::string(pos_per_layer ? "true" : "false"),
        "qgm.share_wv=" + std::string(qgm_share_wv ? "true" : "false"),
        "query.kind=" + to_string(query_kind),
        "seed=" + std::to_string(seed),
        "text.nt=" + std::to_string(nt),
        "train.batch=" + std::to_string(batch_size),
        "train.beta1=" + num(adam_beta1),
        "train.beta2=" + num(adam_beta2),
        "train.checkpoint_every=" + std::to_string(checkpoint_every),
        "train.eps=" + num(adam_eps),
        "train.lr=" + num(lr),
        "train.steps=" + std::to_string(steps),
        "transformer.layers_dec=" + std::to_string(layers_dec),
        "transformer.layers_enc=" + std::to_string(layers_enc),
    };
    std::sort(lines.begin(), lines.end());
    return lines;
}

std::uint64_t Config::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& line : canonical_lines()) h = fnv1a64(line + "\n", h);
    return h;
}

}  // namespace vlt
