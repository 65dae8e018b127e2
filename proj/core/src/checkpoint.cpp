#include "ctxkoop/checkpoint.hpp"

#include "ctxkoop/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace ctxkoop {

using nlohmann::json;

namespace {

json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json to_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json to_json(const Mlp2& n) {
    return {{"activation", n.activation == Activation::ReLU ? "relu" : "identity"},
            {"w1", to_json(n.w1)},
            {"b1", to_json(n.b1)},
            {"w2", to_json(n.w2)},
            {"b2", to_json(n.b2)}};
}

json dims_json(const ModelDims& d) {
    return {{"csi_in", d.csi_in},         {"csi_hidden", d.csi_hidden},
            {"csi_latent", d.csi_latent}, {"ctx_in", d.ctx_in},
            {"ctx_hidden", d.ctx_hidden}, {"ctx_latent", d.ctx_latent}};
}

json weights_json(const LossWeights& w) {
    return {{"alpha", w.alpha}, {"beta", w.beta}, {"gamma", w.gamma}, {"lambda", w.lambda}};
}

json standardizer_json(const Standardizer& s) {
    return {{"csi_mean", s.csi_mean()},
            {"csi_std", s.csi_std()},
            {"ctx_mean", to_json(s.ctx_mean())},
            {"ctx_std", to_json(s.ctx_std())}};
}

template <class Model>
json model_json(const Model& m) {
    return {{"csi_enc", to_json(m.csi_enc)}, {"csi_dec", to_json(m.csi_dec)},
            {"ctx_enc", to_json(m.ctx_enc)}, {"ctx_dec", to_json(m.ctx_dec)},
            {"K", to_json(m.K)},             {"B", to_json(m.B)}};
}

void require_finite(const std::vector<std::span<const double>>& blocks) {
    for (auto b : blocks) {
        for (double x : b) {
            if (!std::isfinite(x)) throw NumericError("cannot save non-finite parameters");
        }
    }
}

// --- reading ---------------------------------------------------------------------------

const json& field(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) {
        throw SchemaError("missing field '" + std::string(key) + "' in " + where);
    }
    return j.at(key);
}

double number(const json& j, const std::string& where) {
    if (!j.is_number()) throw SchemaError(where + " must be a number");
    return j.get<double>();
}

int integer(const json& j, const std::string& where) {
    if (!j.is_number_integer()) throw SchemaError(where + " must be an integer");
    return j.get<int>();
}

Vector read_vector(const json& j, Eigen::Index n, const std::string& where) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) {
        throw SchemaError(where + " must be an array of " + std::to_string(n) + " numbers");
    }
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = number(j[static_cast<std::size_t>(i)], where);
    return v;
}

Matrix read_matrix(const json& j, Eigen::Index rows, Eigen::Index cols,
                   const std::string& where) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
        throw SchemaError(where + " must have " + std::to_string(rows) + " rows");
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw SchemaError(where + " row " + std::to_string(i) + " must have " +
                              std::to_string(cols) + " columns");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(i, c) = number(row[static_cast<std::size_t>(c)], where);
        }
    }
    return m;
}

Mlp2 read_mlp(const json& j, Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
              const std::string& where) {
    Mlp2 n;
    const std::string act = field(j, "activation", where).is_string()
                                ? j.at("activation").get<std::string>()
                                : std::string();
    if (act == "relu") {
        n.activation = Activation::ReLU;
    } else if (act == "identity") {
        n.activation = Activation::Identity;
    } else {
        throw SchemaError(where + ".activation must be \"relu\" or \"identity\"");
    }
    n.w1 = read_matrix(field(j, "w1", where), hidden, in, where + ".w1");
    n.b1 = read_vector(field(j, "b1", where), hidden, where + ".b1");
    n.w2 = read_matrix(field(j, "w2", where), out, hidden, where + ".w2");
    n.b2 = read_vector(field(j, "b2", where), out, where + ".b2");
    return n;
}

template <class Model>
Model read_model(const json& w, const ModelDims& d, int enc_factor) {
    Model m;
    m.dims = d;
    m.csi_enc = read_mlp(field(w, "csi_enc", "weights"), d.csi_in, d.csi_hidden,
                         enc_factor * d.csi_latent, "weights.csi_enc");
    m.csi_dec = read_mlp(field(w, "csi_dec", "weights"), d.csi_latent, d.csi_hidden, d.csi_in,
                         "weights.csi_dec");
    m.ctx_enc = read_mlp(field(w, "ctx_enc", "weights"), d.ctx_in, d.ctx_hidden,
                         enc_factor * d.ctx_latent, "weights.ctx_enc");
    m.ctx_dec = read_mlp(field(w, "ctx_dec", "weights"), d.ctx_latent, d.ctx_hidden, d.ctx_in,
                         "weights.ctx_dec");
    m.K = read_matrix(field(w, "K", "weights"), d.csi_latent, d.csi_latent, "weights.K");
    m.B = read_matrix(field(w, "B", "weights"), d.csi_latent, d.ctx_latent, "weights.B");
    return m;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    json doc;
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            m.validate();
            require_finite(m.blocks());
            doc["dims"] = dims_json(m.dims);
            doc["weights"] = model_json(m);
            if constexpr (std::is_same_v<M, VkaeModel>) {
                doc["format_version"] = kVkaeFormat;
                doc["sigma2_h"] = m.sigma2_h;
                doc["sigma2_u"] = m.sigma2_u;
            } else {
                doc["format_version"] = kPiaeFormat;
            }
        },
        ckpt.model);
    doc["loss_weights"] = weights_json(ckpt.loss_weights);
    doc["rng_seed"] = ckpt.rng_seed;
    if (ckpt.standardizer) doc["standardizer"] = standardizer_json(*ckpt.standardizer);
    return doc.dump() + "\n";
}

Checkpoint checkpoint_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    const json& version = field(doc, "format_version", "checkpoint");
    if (!version.is_string()) throw SchemaError("format_version must be a string");
    const std::string v = version.get<std::string>();

    const json& dj = field(doc, "dims", "checkpoint");
    ModelDims d;
    d.csi_in = integer(field(dj, "csi_in", "dims"), "dims.csi_in");
    d.csi_hidden = integer(field(dj, "csi_hidden", "dims"), "dims.csi_hidden");
    d.csi_latent = integer(field(dj, "csi_latent", "dims"), "dims.csi_latent");
    d.ctx_in = integer(field(dj, "ctx_in", "dims"), "dims.ctx_in");
    d.ctx_hidden = integer(field(dj, "ctx_hidden", "dims"), "dims.ctx_hidden");
    d.ctx_latent = integer(field(dj, "ctx_latent", "dims"), "dims.ctx_latent");
    try {
        d.validate();
    } catch (const Error& e) {
        throw SchemaError(std::string("dims: ") + e.what());
    }

    Checkpoint ckpt;
    const json& w = field(doc, "weights", "checkpoint");
    if (v == kPiaeFormat) {
        ckpt.model = read_model<PiaeModel>(w, d, 1);
    } else if (v == kVkaeFormat) {
        auto m = read_model<VkaeModel>(w, d, 2);
        m.sigma2_h = number(field(doc, "sigma2_h", "checkpoint"), "sigma2_h");
        m.sigma2_u = number(field(doc, "sigma2_u", "checkpoint"), "sigma2_u");
        ckpt.model = std::move(m);
    } else {
        throw SchemaError("unsupported format_version '" + v + "' (expected " +
                          std::string(kPiaeFormat) + " or " + std::string(kVkaeFormat) + ")");
    }

    const json& lw = field(doc, "loss_weights", "checkpoint");
    ckpt.loss_weights.alpha = number(field(lw, "alpha", "loss_weights"), "loss_weights.alpha");
    ckpt.loss_weights.beta = number(field(lw, "beta", "loss_weights"), "loss_weights.beta");
    ckpt.loss_weights.gamma = number(field(lw, "gamma", "loss_weights"), "loss_weights.gamma");
    ckpt.loss_weights.lambda =
        number(field(lw, "lambda", "loss_weights"), "loss_weights.lambda");

    const json& seed = field(doc, "rng_seed", "checkpoint");
    if (!seed.is_number_unsigned() && !seed.is_number_integer()) {
        throw SchemaError("rng_seed must be a non-negative integer");
    }
    ckpt.rng_seed = seed.get<std::uint64_t>();

    if (doc.contains("standardizer")) {
        const json& s = doc.at("standardizer");
        ckpt.standardizer = Standardizer::from_moments(
            number(field(s, "csi_mean", "standardizer"), "standardizer.csi_mean"),
            number(field(s, "csi_std", "standardizer"), "standardizer.csi_std"),
            read_vector(field(s, "ctx_mean", "standardizer"), d.ctx_in, "standardizer.ctx_mean"),
            read_vector(field(s, "ctx_std", "standardizer"), d.ctx_in, "standardizer.ctx_std"));
    }
    std::visit([](const auto& m) { m.validate(); }, ckpt.model);
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const std::string text = checkpoint_to_json(ckpt);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot open '" + path.string() + "' for writing");
    os << text;
    if (!os) throw InputError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open checkpoint '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return checkpoint_from_json(ss.str());
}

std::string trainer_state_json(const Trainer& trainer) {
    json doc;
    std::visit(
        [&](const auto& m) {
            doc["dims"] = dims_json(m.dims);
            doc["weights"] = model_json(m);
        },
        trainer.model());
    const AdamState& a = trainer.adam();
    doc["adam"] = {{"lr", a.config.lr},       {"beta1", a.config.beta1},
                   {"beta2", a.config.beta2}, {"eps", a.config.eps},
                   {"step", a.step},          {"block_steps", a.block_steps},
                   {"m", a.m},                {"v", a.v}};
    json hist = json::array();
    for (const LossCurve& c : trainer.history()) {
        json curve = json::array();
        for (const LossRecord& r : c) {
            curve.push_back({r.iteration, r.csi_t, r.csi_t1, r.context, r.koopman, r.kl_z,
                             r.kl_zeta, r.total});
        }
        hist.push_back(std::move(curve));
    }
    doc["history"] = std::move(hist);
    if (trainer.standardizer().fitted()) {
        doc["standardizer"] = standardizer_json(trainer.standardizer());
    }
    doc["initial_latent"] = to_json(trainer.initial_latent());
    doc["episodes"] = trainer.episodes();
    return doc.dump();
}

}  // namespace ctxkoop
