#include "pcic/config.hpp"

#include <fstream>
#include <set>

namespace pcic {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("config: unknown key '" + where + it.key() + "'");
}

}  // namespace

void GlobalConfig::validate() const {
    ctx.validate();
    codec.validate();
    if (projection_s <= 0.0) throw ConfigError("config: projection.s must be > 0");
    if (train.lambdas.empty()) throw ConfigError("config: train.lambdas must not be empty");
    for (double l : train.lambdas)
        if (l <= 0.0) throw ConfigError("config: lambdas must be > 0");
    if (train.lambdas.size() > 255) throw ConfigError("config: at most 255 lambdas");
    make_train_config(*this, train.lambdas.front()).validate();
    for (const auto& [scene, split] : dataset.splits)
        if (split != "train" && split != "val" && split != "test")
            throw ConfigError("config: split for scene '" + scene +
                              "' must be train, val, or test");
}

GlobalConfig load_global_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    json j = json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);

    GlobalConfig g;
    reject_unknown(j,
                   {"seed", "out_dir", "dataset", "projection", "context", "codec", "train",
                    "eval", "model_name"},
                   "");
    g.seed = j.value("seed", g.seed);
    g.out_dir = j.value("out_dir", g.out_dir.string());
    g.model_name = j.value("model_name", g.model_name);

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        reject_unknown(d, {"root", "camera", "splits", "roi"}, "dataset.");
        g.dataset.root = d.value("root", std::string());
        g.dataset.camera = d.value("camera", g.dataset.camera);
        if (d.contains("splits"))
            for (auto it = d.at("splits").begin(); it != d.at("splits").end(); ++it)
                g.dataset.splits[it.key()] = it.value().get<std::string>();
        if (d.contains("roi")) {
            const auto& r = d.at("roi");
            reject_unknown(r, {"x", "y", "w", "h"}, "dataset.roi.");
            g.dataset.roi = Rect{r.value("x", 0), r.value("y", 0), r.value("w", 0),
                                 r.value("h", 0)};
        }
    }
    if (j.contains("projection")) {
        reject_unknown(j.at("projection"), {"s"}, "projection.");
        g.projection_s = j.at("projection").value("s", g.projection_s);
    }
    if (j.contains("context")) {
        const auto& c = j.at("context");
        reject_unknown(c, {"c_channels", "c_hyper_channels", "pip_width"}, "context.");
        g.ctx.c_channels = c.value("c_channels", g.ctx.c_channels);
        g.ctx.c_hyper_channels = c.value("c_hyper_channels", g.ctx.c_hyper_channels);
        g.ctx.pip_width = c.value("pip_width", g.ctx.pip_width);
    }
    if (j.contains("codec")) {
        const auto& c = j.at("codec");
        reject_unknown(c, {"n_channels", "m_channels", "hyper_channels", "conditional",
                           "injection_sides"},
                       "codec.");
        g.codec.n_channels = c.value("n_channels", g.codec.n_channels);
        g.codec.m_channels = c.value("m_channels", g.codec.m_channels);
        g.codec.hyper_channels = c.value("hyper_channels", g.codec.hyper_channels);
        g.codec.conditional = c.value("conditional", g.codec.conditional);
        g.codec.injection_sides =
            injection_sides_from_string(c.value("injection_sides", "both"));
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reject_unknown(t,
                       {"lambdas", "total_steps", "alpha_schedule", "batch_size", "patch",
                        "learning_rate", "adam_beta1", "adam_beta2", "grad_clip", "ablation",
                        "checkpoint_every", "log_every"},
                       "train.");
        if (t.contains("lambdas")) g.train.lambdas = t.at("lambdas").get<std::vector<double>>();
        g.train.total_steps = t.value("total_steps", g.train.total_steps);
        g.train.batch_size = t.value("batch_size", g.train.batch_size);
        g.train.patch = t.value("patch", g.train.patch);
        g.train.learning_rate = t.value("learning_rate", g.train.learning_rate);
        g.train.adam_beta1 = t.value("adam_beta1", g.train.adam_beta1);
        g.train.adam_beta2 = t.value("adam_beta2", g.train.adam_beta2);
        g.train.grad_clip = t.value("grad_clip", g.train.grad_clip);
        g.train.ablation = ablation_from_string(t.value("ablation", "full"));
        g.train.checkpoint_every = t.value("checkpoint_every", g.train.checkpoint_every);
        g.train.log_every = t.value("log_every", g.train.log_every);
        if (t.contains("alpha_schedule")) {
            g.train.alpha_schedule.clear();
            for (const auto& seg : t.at("alpha_schedule")) {
                reject_unknown(seg, {"fraction", "alpha"}, "train.alpha_schedule[].");
                g.train.alpha_schedule.push_back(
                    {seg.at("fraction").get<double>(), seg.at("alpha").get<double>()});
            }
        }
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        reject_unknown(e, {"degrade_voxel", "zeros", "split"}, "eval.");
        g.eval.degrade_voxel = e.value("degrade_voxel", g.eval.degrade_voxel);
        g.eval.zeros = e.value("zeros", g.eval.zeros);
        g.eval.split = e.value("split", g.eval.split);
    }
    g.validate();
    return g;
}

TrainConfig make_train_config(const GlobalConfig& g, double lambda) {
    TrainConfig t;
    t.lambda = lambda;
    t.total_steps = g.train.total_steps;
    t.alpha_schedule = g.train.alpha_schedule;
    t.batch_size = g.train.batch_size;
    t.patch = g.train.patch;
    t.learning_rate = g.train.learning_rate;
    t.adam_beta1 = g.train.adam_beta1;
    t.adam_beta2 = g.train.adam_beta2;
    t.grad_clip = g.train.grad_clip;
    t.seed = g.seed;
    t.ablation = g.train.ablation;
    t.checkpoint_every = g.train.checkpoint_every;
    t.log_every = g.train.log_every;
    return t;
}

ModelConfig make_model_config(const GlobalConfig& g, int lambda_index) {
    if (lambda_index < 0 || static_cast<std::size_t>(lambda_index) >= g.train.lambdas.size())
        throw ConfigError("lambda_index " + std::to_string(lambda_index) + " out of range");
    ModelConfig m;
    m.name = g.model_name;
    m.ctx = g.ctx;
    m.codec = g.codec;
    m.codec.lambda_index = lambda_index;
    m.ablation = g.train.ablation;
    m.lambda = g.train.lambdas[static_cast<std::size_t>(lambda_index)];
    m.init_seed = g.seed + static_cast<std::uint64_t>(lambda_index) * 7919;
    m.canonicalize();
    m.validate();
    return m;
}

}  // namespace pcic
