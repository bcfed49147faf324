// Pipeline driver. Every subcommand reads files, writes files, and drops a
// manifest next to each --out artifact; no state passes between commands any
// other way. Outputs are a pure function of inputs and flags, so reruns are
// byte-identical and --workers never changes bytes, only wall time.
//
// Exit codes, one per error class:
//   0 success
//   2 usage (bad flags, flag values, or flag combinations)
//   3 io (missing, unreadable, or unwritable files)
//   4 schema (input parses but violates the corpus or artifact contract)
//   5 model (model file corrupt, wrong magic, or incompatible)
//   1 anything unexpected
//
// Failures print a single json object on stderr: {"error": class, "message":
// text}. The env var HALKNOB_SEED overrides every --seed flag.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "halknob/cond_lm.hpp"
#include "halknob/controlled_gen.hpp"
#include "halknob/corpus.hpp"
#include "halknob/error.hpp"
#include "halknob/eval.hpp"
#include "halknob/halscore.hpp"
#include "halknob/ngram_lm.hpp"
#include "halknob/pipeline.hpp"
#include "halknob/rng.hpp"
#include "halknob/synthgen.hpp"
#include "halknob/tag.hpp"
#include "halknob/tokenizer.hpp"

namespace {

using namespace halknob;

constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitSchema = 4;
constexpr int kExitModel = 5;

int fail(int code, const char* cls, const std::string& message) {
    nlohmann::json j;
    j["error"] = cls;
    j["message"] = message;
    std::cerr << j.dump() << "\n";
    return code;
}

uint64_t resolve_seed(uint64_t flag_value) {
    const char* env = std::getenv("HALKNOB_SEED");
    if (!env || !*env) return flag_value;
    std::string s = env;
    if (s.find_first_not_of("0123456789") != std::string::npos)
        throw usage_error("HALKNOB_SEED must be a nonnegative integer, got \"" +
                          s + "\"");
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw usage_error("HALKNOB_SEED out of range: \"" + s + "\"");
    }
}

std::optional<ScoreBy> try_parse_by(const std::string& s) {
    if (s == "wo") return ScoreBy::wo;
    if (s == "lm") return ScoreBy::lm;
    return std::nullopt;
}

ScoreBy parse_by_flag(const std::string& s) {
    if (auto v = try_parse_by(s)) return *v;
    throw usage_error("--by must be wo or lm, got \"" + s + "\"");
}

std::optional<BucketMode> try_parse_mode(const std::string& s) {
    if (s == "fixed") return BucketMode::fixed;
    if (s == "quantile") return BucketMode::quantile;
    return std::nullopt;
}

BucketMode parse_mode_flag(const std::string& s) {
    if (auto v = try_parse_mode(s)) return *v;
    throw usage_error("--mode must be fixed or quantile, got \"" + s + "\"");
}

ScoreMethod parse_method_flag(const std::string& s) {
    if (s == "wo") return ScoreMethod::wo;
    if (s == "lm") return ScoreMethod::lm;
    if (s == "both") return ScoreMethod::both;
    throw usage_error("--method must be wo, lm or both, got \"" + s + "\"");
}

Tag parse_tag_flag(const std::string& s) {
    if (auto t = try_parse_tag(s)) return *t;
    throw usage_error("--tag must be one of hal_0..hal_4, got \"" + s + "\"");
}

const char* by_name(ScoreBy by) { return by == ScoreBy::wo ? "wo" : "lm"; }

const char* mode_name(BucketMode m) {
    return m == BucketMode::fixed ? "fixed" : "quantile";
}

// One manifest per primary artifact; sidecar reports are listed among the
// manifest outputs but sit next to the primary's manifest. --workers stays
// out of the parameters: it must never change bytes.
void emit_manifest(const std::string& command, const nlohmann::json& params,
                   const std::vector<std::string>& inputs,
                   const std::string& primary,
                   const std::vector<std::string>& sidecars = {}) {
    std::vector<std::string> outputs{primary};
    outputs.insert(outputs.end(), sidecars.begin(), sidecars.end());
    write_manifest(primary, make_manifest(command, params, inputs, outputs));
}

void write_json_artifact(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path);
    out << j.dump(2) << "\n";
    if (!out) throw io_error("write failed: " + path);
}

nlohmann::json read_json_artifact(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::parse_error& e) {
        throw schema_error(path + ": invalid json: " + e.what());
    }
}

// ---------------------------------------------------------------- synth

struct SynthOpts {
    std::string out;
    SynthConfig cfg;
    std::vector<std::string> schema;
    unsigned workers = 1;
};

int cmd_synth(SynthOpts& o) {
    o.cfg.seed = resolve_seed(o.cfg.seed);
    if (!o.schema.empty()) o.cfg.schema = o.schema;
    std::vector<Example> corpus = generate_corpus(o.cfg, o.workers);
    write_corpus(o.out, corpus);
    nlohmann::json params;
    params["n"] = o.cfg.n_examples;
    params["seed"] = o.cfg.seed;
    params["noise_rate"] = o.cfg.noise_rate;
    params["paraphrase_rate"] = o.cfg.paraphrase_rate;
    params["inference_rate"] = o.cfg.inference_rate;
    params["schema"] = o.cfg.schema;
    emit_manifest("synth", params, {}, o.out);
    std::cerr << "synth: " << corpus.size() << " examples -> " << o.out << "\n";
    return 0;
}

// ------------------------------------------------------------- train-lm

struct TrainLmOpts {
    std::string in, out;
    int order = 3;
    std::vector<double> k;
    uint32_t min_count = 1;
};

int cmd_train_lm(TrainLmOpts& o) {
    if (o.k.empty()) o.k = {0.1};
    std::vector<Example> corpus = read_corpus(o.in);
    std::vector<TokenSeq> targets;
    targets.reserve(corpus.size());
    for (const auto& ex : corpus) targets.push_back(tokenize(ex.target));
    NgramModel m = train_ngram(targets, o.order, o.k, o.min_count);
    save_model(m, o.out);
    nlohmann::json params;
    params["in"] = o.in;
    params["order"] = o.order;
    params["k"] = o.k;
    params["min_count"] = o.min_count;
    emit_manifest("train-lm", params, {o.in}, o.out);
    std::cerr << "train-lm: order " << o.order << ", vocab "
              << m.id_to_token.size() << " -> " << o.out << "\n";
    return 0;
}

// ------------------------------------------------------------- fit-cond

struct FitCondOpts {
    std::string in, base, out;
    double k_copy = 0.1;
    bool include_field_names = false;
    double lambda_init = 0.5;
    bool per_tag = false;
};

nlohmann::json lambda_report(const CopyMixtureModel& m) {
    nlohmann::json j;
    j["lambda"] = m.lambda;
    if (m.tag_lambda) {
        nlohmann::json per;
        for (Tag t : kAllTags)
            per[tag_name(t)] = (*m.tag_lambda)[static_cast<size_t>(t)];
        j["tag_lambda"] = std::move(per);
    } else {
        j["tag_lambda"] = nullptr;
    }
    return j;
}

int cmd_fit_cond(FitCondOpts& o) {
    std::vector<Example> corpus = read_corpus(o.in);
    CopyMixtureModel m;
    m.base = load_ngram_model(o.base);
    m.k_copy = o.k_copy;
    m.include_field_names = o.include_field_names;
    m.lambda = o.lambda_init;
    m = fit_copy_weight(std::move(m), corpus, o.per_tag);
    save_model(m, o.out);
    std::string report_path = o.out + ".report.json";
    write_json_artifact(report_path, lambda_report(m));
    nlohmann::json params;
    params["in"] = o.in;
    params["base"] = o.base;
    params["k_copy"] = o.k_copy;
    params["include_field_names"] = o.include_field_names;
    params["lambda_init"] = o.lambda_init;
    params["per_tag"] = o.per_tag;
    emit_manifest("fit-cond", params, {o.in, o.base}, o.out, {report_path});
    std::cerr << "fit-cond: lambda " << m.lambda << " -> " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------- score

struct ScoreOpts {
    std::string in, out;
    std::string method = "both";
    std::string base, cond;
    bool include_field_names = false;
    int heldout_folds = 0;
    int order = 3;
    double k = 0.1;
    uint32_t min_count = 1;
    double k_copy = 0.1;
    double lambda_init = 0.5;
    unsigned workers = 1;
};

bool has_full_gold(const std::vector<Example>& corpus) {
    for (const auto& ex : corpus)
        if (!ex.gold_support || !ex.gold_labels || !ex.noise_fraction ||
            !ex.hal_wo || !ex.hal_lm)
            return false;
    return !corpus.empty();
}

int cmd_score(ScoreOpts& o) {
    ScoreMethod method = parse_method_flag(o.method);
    bool want_lm = method != ScoreMethod::wo;
    std::vector<Example> corpus = read_corpus(o.in);
    std::vector<std::string> inputs{o.in};
    if (o.heldout_folds > 0) {
        if (!o.base.empty() || !o.cond.empty())
            throw usage_error(
                "--heldout-folds trains its own models; drop --base/--cond");
        HeldoutConfig hc;
        hc.order = o.order;
        hc.k = o.k;
        hc.min_count = o.min_count;
        hc.k_copy = o.k_copy;
        hc.include_field_names = o.include_field_names;
        hc.lambda_init = o.lambda_init;
        score_corpus_heldout(corpus, method, o.heldout_folds, hc, o.workers);
    } else if (want_lm) {
        if (o.base.empty() || o.cond.empty())
            throw usage_error("--method " + o.method +
                              " needs --base and --cond (or --heldout-folds)");
        NgramModel lm = load_ngram_model(o.base);
        CopyMixtureModel lm_x = load_cond_model(o.cond);
        inputs.push_back(o.base);
        inputs.push_back(o.cond);
        score_corpus(corpus, method, &lm, &lm_x, o.include_field_names,
                     o.workers);
    } else {
        score_corpus(corpus, method, nullptr, nullptr, o.include_field_names,
                     o.workers);
    }
    write_corpus(o.out, corpus);

    nlohmann::json report;
    size_t n_wo = 0, n_lm = 0;
    double sum_wo = 0.0, sum_lm = 0.0;
    for (const auto& ex : corpus) {
        if (ex.hal_wo) {
            ++n_wo;
            sum_wo += *ex.hal_wo;
        }
        if (ex.hal_lm) {
            ++n_lm;
            sum_lm += *ex.hal_lm;
        }
    }
    report["n"] = corpus.size();
    report["n_scored_wo"] = n_wo;
    report["n_scored_lm"] = n_lm;
    report["mean_hal_wo"] =
        n_wo ? nlohmann::json(sum_wo / static_cast<double>(n_wo))
             : nlohmann::json();
    report["mean_hal_lm"] =
        n_lm ? nlohmann::json(sum_lm / static_cast<double>(n_lm))
             : nlohmann::json();
    // Corpora with full ground truth also get the detection stats.
    report["synthetic"] = has_full_gold(corpus)
                              ? scorer_report_to_json(scorer_report(corpus))
                              : nlohmann::json();
    std::string report_path = o.out + ".report.json";
    write_json_artifact(report_path, report);

    nlohmann::json params;
    params["in"] = o.in;
    params["method"] = o.method;
    params["base"] = o.base;
    params["cond"] = o.cond;
    params["include_field_names"] = o.include_field_names;
    params["heldout_folds"] = o.heldout_folds;
    if (o.heldout_folds > 0) {
        params["order"] = o.order;
        params["k"] = o.k;
        params["min_count"] = o.min_count;
        params["k_copy"] = o.k_copy;
        params["lambda_init"] = o.lambda_init;
    }
    emit_manifest("score", params, inputs, o.out, {report_path});
    std::cerr << "score: " << corpus.size() << " examples -> " << o.out
              << "\n";
    return 0;
}

// --------------------------------------------------------------- bucket

struct BucketOpts {
    std::string in, out;
    std::string by = "wo";
    std::string mode = "fixed";
};

int cmd_bucket(BucketOpts& o) {
    ScoreBy by = parse_by_flag(o.by);
    BucketMode mode = parse_mode_flag(o.mode);
    std::vector<Example> corpus = read_corpus(o.in);
    std::vector<double> scores;
    for (const auto& ex : corpus)
        if (auto s = driving_score(ex, by)) scores.push_back(*s);
    if (scores.empty())
        throw schema_error("no examples carry the score to bucket on; run "
                           "scoring first");
    Bucketer b = make_bucketer(scores, mode);
    nlohmann::json j;
    j["by"] = by_name(by);
    j["mode"] = mode_name(b.mode);
    j["boundaries"] = b.boundaries;
    j["degenerate"] = b.degenerate;
    j["n_scores"] = scores.size();
    write_json_artifact(o.out, j);
    nlohmann::json params;
    params["in"] = o.in;
    params["by"] = o.by;
    params["mode"] = o.mode;
    emit_manifest("bucket", params, {o.in}, o.out);
    std::cerr << "bucket: boundaries from " << scores.size() << " scores -> "
              << o.out << "\n";
    return 0;
}

// ------------------------------------------------------------- annotate

struct AnnotateOpts {
    std::string in, out;
    std::string by = "wo";
    std::string mode = "fixed";
    std::string bucketer;
};

int cmd_annotate(AnnotateOpts& o) {
    std::vector<Example> corpus = read_corpus(o.in);
    std::vector<std::string> inputs{o.in};
    AnnotateReport rep;
    if (!o.bucketer.empty()) {
        nlohmann::json j = read_json_artifact(o.bucketer);
        if (!j.is_object() || !j.contains("by") || !j.contains("mode") ||
            !j.contains("boundaries") || !j.contains("degenerate"))
            throw schema_error(o.bucketer + ": not a bucketer artifact");
        auto by = try_parse_by(j["by"].get<std::string>());
        auto mode = try_parse_mode(j["mode"].get<std::string>());
        if (!by || !mode)
            throw schema_error(o.bucketer + ": bad \"by\" or \"mode\"");
        Bucketer b;
        b.mode = *mode;
        auto bounds = j["boundaries"].get<std::vector<double>>();
        if (bounds.size() != b.boundaries.size())
            throw schema_error(o.bucketer + ": need 4 boundaries, got " +
                               std::to_string(bounds.size()));
        std::copy(bounds.begin(), bounds.end(), b.boundaries.begin());
        b.degenerate = j["degenerate"].get<bool>();
        rep = annotate_with(corpus, *by, b);
        inputs.push_back(o.bucketer);
    } else {
        rep = annotate_corpus(corpus, parse_by_flag(o.by),
                              parse_mode_flag(o.mode));
    }
    write_corpus(o.out, corpus);
    std::string report_path = o.out + ".report.json";
    write_json_artifact(report_path, annotate_report_to_json(rep));
    nlohmann::json params;
    params["in"] = o.in;
    params["bucketer"] = o.bucketer;
    if (o.bucketer.empty()) {
        params["by"] = o.by;
        params["mode"] = o.mode;
    }
    emit_manifest("annotate", params, inputs, o.out, {report_path});
    std::cerr << "annotate: tagged " << rep.n_tagged << "/" << rep.n_examples
              << " -> " << o.out << "\n";
    return 0;
}

// --------------------------------------------------------------- filter

struct FilterOpts {
    std::string in, out;
    double keep = 0.0;
    std::string by = "wo";
};

int cmd_filter(FilterOpts& o) {
    ScoreBy by = parse_by_flag(o.by);
    std::vector<Example> corpus = read_corpus(o.in);
    std::vector<Example> kept = filter_clean(corpus, o.keep, by);
    write_corpus(o.out, kept);
    nlohmann::json params;
    params["in"] = o.in;
    params["keep"] = o.keep;
    params["by"] = o.by;
    emit_manifest("filter", params, {o.in}, o.out);
    std::cerr << "filter: kept " << kept.size() << "/" << corpus.size()
              << " -> " << o.out << "\n";
    return 0;
}

// ----------------------------------------------------- train-controlled

struct TrainControlledOpts {
    std::string in, base, out;
    double k_copy = 0.1;
    bool include_field_names = false;
    double lambda_init = 0.5;
};

int cmd_train_controlled(TrainControlledOpts& o) {
    std::vector<Example> corpus = read_corpus(o.in);
    CopyMixtureModel m;
    m.base = load_ngram_model(o.base);
    m.k_copy = o.k_copy;
    m.include_field_names = o.include_field_names;
    m.lambda = o.lambda_init;
    ControlledTrainReport rep;
    m = train_controlled(std::move(m), corpus, &rep);
    save_model(m, o.out);

    nlohmann::json report;
    report["global_lambda"] = rep.global_lambda;
    nlohmann::json lam, cnt, inh;
    for (Tag t : kAllTags) {
        auto i = static_cast<size_t>(t);
        lam[tag_name(t)] = rep.lambda[i];
        cnt[tag_name(t)] = rep.n_examples[i];
        inh[tag_name(t)] = rep.inherited[i];
    }
    report["lambda"] = std::move(lam);
    report["n_examples"] = std::move(cnt);
    report["inherited"] = std::move(inh);
    std::string report_path = o.out + ".report.json";
    write_json_artifact(report_path, report);

    nlohmann::json params;
    params["in"] = o.in;
    params["base"] = o.base;
    params["k_copy"] = o.k_copy;
    params["include_field_names"] = o.include_field_names;
    params["lambda_init"] = o.lambda_init;
    emit_manifest("train-controlled", params, {o.in, o.base}, o.out,
                  {report_path});
    std::cerr << "train-controlled: global lambda " << rep.global_lambda
              << " -> " << o.out << "\n";
    return 0;
}

// ------------------------------------------------------------- generate

struct GenerateOpts {
    std::string in, model, out;
    std::string tag;
    std::string strategy = "greedy";
    size_t beam_width = 1;
    size_t max_len = 40;
    uint64_t seed = 0;
    double temperature = 1.0;
    unsigned workers = 1;
};

GenerationConfig base_config(const GenerateOpts& o) {
    GenerationConfig cfg;
    if (!o.tag.empty()) cfg.tag = parse_tag_flag(o.tag);
    cfg.strategy = parse_strategy(o.strategy);
    cfg.beam_width = o.beam_width;
    cfg.max_len = o.max_len;
    cfg.seed = o.seed;
    cfg.temperature = o.temperature;
    return cfg;
}

// Sampling seeds derive per example so the draw stream never depends on
// worker count or corpus order.
std::vector<TokenSeq> generate_all(const CopyMixtureModel& m,
                                   const std::vector<Example>& examples,
                                   const GenerationConfig& base,
                                   unsigned workers) {
    std::vector<size_t> idx(examples.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return parallel_map(
        idx,
        [&](size_t i) {
            GenerationConfig cfg = base;
            cfg.seed = derive_seed(base.seed, i);
            return generate(m, examples[i].source, cfg);
        },
        workers);
}

void gen_params(nlohmann::json& params, const GenerateOpts& o) {
    params["in"] = o.in;
    params["model"] = o.model;
    params["strategy"] = o.strategy;
    params["beam_width"] = o.beam_width;
    params["max_len"] = o.max_len;
    params["seed"] = o.seed;
    params["temperature"] = o.temperature;
}

int cmd_generate(GenerateOpts& o) {
    o.seed = resolve_seed(o.seed);
    GenerationConfig cfg = base_config(o);
    std::vector<Example> corpus = read_corpus(o.in);
    if (corpus.empty()) throw schema_error("generate: empty corpus");
    CopyMixtureModel m = load_cond_model(o.model);
    std::vector<TokenSeq> outputs = generate_all(m, corpus, cfg, o.workers);
    std::ofstream out(o.out, std::ios::binary);
    if (!out) throw io_error("cannot write " + o.out);
    for (size_t i = 0; i < outputs.size(); ++i) {
        nlohmann::json j;
        j["id"] = corpus[i].id;
        j["tag"] = cfg.tag ? nlohmann::json(tag_name(*cfg.tag))
                           : nlohmann::json();
        j["prediction"] = join(outputs[i]);
        out << j.dump() << "\n";
    }
    if (!out) throw io_error("write failed: " + o.out);
    out.close();
    nlohmann::json params;
    gen_params(params, o);
    params["tag"] = o.tag;
    emit_manifest("generate", params, {o.in, o.model}, o.out);
    std::cerr << "generate: " << outputs.size() << " predictions -> " << o.out
              << "\n";
    return 0;
}

// ----------------------------------------------------------- knob-sweep

struct KnobSweepOpts {
    GenerateOpts gen;
    bool gold_support = false;
};

int cmd_knob_sweep(KnobSweepOpts& o) {
    o.gen.seed = resolve_seed(o.gen.seed);
    if (!o.gen.tag.empty())
        throw usage_error("knob-sweep generates every tag; drop --tag");
    GenerationConfig cfg = base_config(o.gen);
    std::vector<Example> corpus = read_corpus(o.gen.in);
    if (corpus.empty()) throw schema_error("knob-sweep: empty corpus");
    CopyMixtureModel m = load_cond_model(o.gen.model);

    std::vector<std::set<std::string>> support;
    if (o.gold_support) {
        support.reserve(corpus.size());
        for (const auto& ex : corpus) support.push_back(support_vocabulary(ex));
    }

    nlohmann::json rows = nlohmann::json::array();
    std::printf("%-8s  %-16s  %-13s  %-8s\n", "tag", "unsupported_rate",
                "coverage_mean", "mean_len");
    for (Tag t : kAllTags) {
        GenerationConfig tag_cfg = cfg;
        tag_cfg.tag = t;
        tag_cfg.seed = derive_seed(cfg.seed, 1 + static_cast<size_t>(t));
        std::vector<TokenSeq> outputs =
            generate_all(m, corpus, tag_cfg, o.gen.workers);
        EvalReport rep = evaluate_corpus(outputs, corpus,
                                         o.gold_support ? &support : nullptr);
        nlohmann::json row;
        row["tag"] = tag_name(t);
        row["unsupported_rate"] = rep.unsupported_rate;
        row["coverage_mean"] = rep.coverage_mean;
        row["mean_len"] = rep.mean_len;
        rows.push_back(std::move(row));
        std::printf("%-8s  %16.4f  %13.4f  %8.4f\n", tag_name(t).c_str(),
                    rep.unsupported_rate, rep.coverage_mean, rep.mean_len);
    }
    nlohmann::json sweep;
    sweep["rows"] = std::move(rows);
    write_json_artifact(o.gen.out, sweep);
    nlohmann::json params;
    gen_params(params, o.gen);
    params["gold_support"] = o.gold_support;
    emit_manifest("knob-sweep", params, {o.gen.in, o.gen.model}, o.gen.out);
    std::cerr << "knob-sweep: " << kNumTags << " rows -> " << o.gen.out
              << "\n";
    return 0;
}

// ------------------------------------------------------------- evaluate

struct EvaluateOpts {
    std::string pred, ref, out;
    bool gold_support = false;
};

struct Prediction {
    std::string id;
    std::string text;
};

std::vector<Prediction> read_predictions(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open predictions file: " + path);
    std::vector<Prediction> out;
    std::set<std::string> seen;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::string where = path + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw schema_error(where + ": invalid json: " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() ||
            !j.contains("prediction") || !j["prediction"].is_string())
            throw schema_error(
                where + ": need string \"id\" and \"prediction\" fields");
        Prediction p;
        p.id = j["id"].get<std::string>();
        p.text = j["prediction"].get<std::string>();
        if (!seen.insert(p.id).second)
            throw schema_error(where + ": duplicate id \"" + p.id + "\"");
        out.push_back(std::move(p));
    }
    return out;
}

int cmd_evaluate(EvaluateOpts& o) {
    std::vector<Prediction> preds = read_predictions(o.pred);
    if (preds.empty()) throw schema_error(o.pred + ": no predictions");
    std::vector<Example> refs = read_corpus(o.ref);
    std::map<std::string, size_t> by_id;
    for (size_t i = 0; i < refs.size(); ++i) by_id[refs[i].id] = i;

    std::vector<TokenSeq> outputs;
    std::vector<Example> aligned;
    outputs.reserve(preds.size());
    aligned.reserve(preds.size());
    for (const auto& p : preds) {
        auto it = by_id.find(p.id);
        if (it == by_id.end())
            throw schema_error("prediction id \"" + p.id +
                               "\" has no reference example");
        outputs.push_back(tokenize(p.text));
        aligned.push_back(refs[it->second]);
    }
    std::vector<std::set<std::string>> support;
    if (o.gold_support) {
        support.reserve(aligned.size());
        for (const auto& ex : aligned)
            support.push_back(support_vocabulary(ex));
    }
    EvalReport rep =
        evaluate_corpus(outputs, aligned, o.gold_support ? &support : nullptr);
    write_json_artifact(o.out, eval_report_to_json(rep));
    nlohmann::json params;
    params["pred"] = o.pred;
    params["ref"] = o.ref;
    params["gold_support"] = o.gold_support;
    emit_manifest("evaluate", params, {o.pred, o.ref}, o.out);
    std::cerr << "evaluate: n " << rep.n << ", bleu4 " << rep.bleu4
              << ", unsupported_rate " << rep.unsupported_rate << " -> "
              << o.out << "\n";
    return 0;
}

// ----------------------------------------------------------------- main

void add_workers(CLI::App* sub, unsigned& workers) {
    sub->add_option("--workers", workers, "parallel workers; never changes bytes")
        ->check(CLI::Range(1u, 512u));
}

int run_cli(int argc, char** argv) {
    CLI::App app{
        "data-to-text pipeline: score hallucination per example, tag the "
        "corpus, and steer generation with the tags"};
    app.require_subcommand(1);

    SynthOpts synth;
    auto* sub_synth =
        app.add_subcommand("synth", "generate a synthetic labeled corpus");
    sub_synth->add_option("--out", synth.out, "corpus jsonl path")->required();
    sub_synth->add_option("--n", synth.cfg.n_examples, "number of examples");
    sub_synth->add_option("--seed", synth.cfg.seed, "master seed");
    sub_synth->add_option("--noise-rate", synth.cfg.noise_rate,
                          "unsupported-token injection rate");
    sub_synth->add_option("--paraphrase-rate", synth.cfg.paraphrase_rate,
                          "synonym swap rate");
    sub_synth->add_option("--inference-rate", synth.cfg.inference_rate,
                          "club-template rate (inferable content)");
    sub_synth
        ->add_option("--schema", synth.schema,
                     "fields to draw on (name,occupation,dates,club)")
        ->delimiter(',');
    add_workers(sub_synth, synth.workers);

    TrainLmOpts train_lm;
    auto* sub_train_lm = app.add_subcommand(
        "train-lm", "train the unconditional ngram model on targets");
    sub_train_lm->add_option("--in", train_lm.in, "corpus jsonl")->required();
    sub_train_lm->add_option("--out", train_lm.out, "model path")->required();
    sub_train_lm->add_option("--order", train_lm.order, "ngram order");
    sub_train_lm
        ->add_option("--k", train_lm.k,
                     "additive smoothing, one value or one per order")
        ->delimiter(',');
    sub_train_lm->add_option("--min-count", train_lm.min_count,
                             "replace rarer tokens by the unknown token");

    FitCondOpts fit_cond;
    auto* sub_fit_cond = app.add_subcommand(
        "fit-cond", "fit the copy mixture weight on a corpus");
    sub_fit_cond->add_option("--in", fit_cond.in, "corpus jsonl")->required();
    sub_fit_cond->add_option("--base", fit_cond.base, "ngram model")
        ->required();
    sub_fit_cond->add_option("--out", fit_cond.out, "model path")->required();
    sub_fit_cond->add_option("--k-copy", fit_cond.k_copy,
                             "copy distribution smoothing");
    sub_fit_cond->add_flag("--include-field-names",
                           fit_cond.include_field_names,
                           "copy candidates include field name tokens");
    sub_fit_cond->add_option("--lambda-init", fit_cond.lambda_init,
                             "EM starting weight");
    sub_fit_cond->add_flag("--per-tag", fit_cond.per_tag,
                           "also fit one weight per tag (all tags required)");

    ScoreOpts score;
    auto* sub_score =
        app.add_subcommand("score", "attach hallucination scores per example");
    sub_score->add_option("--in", score.in, "corpus jsonl")->required();
    sub_score->add_option("--out", score.out, "scored corpus jsonl")
        ->required();
    sub_score->add_option("--method", score.method, "wo, lm or both");
    sub_score->add_option("--base", score.base, "ngram model (lm scoring)");
    sub_score->add_option("--cond", score.cond,
                          "conditional model (lm scoring)");
    sub_score->add_flag("--include-field-names", score.include_field_names,
                        "count field name tokens as source support");
    sub_score->add_option(
        "--heldout-folds", score.heldout_folds,
        "train per-fold models instead of using --base/--cond");
    sub_score->add_option("--order", score.order, "heldout: ngram order");
    sub_score->add_option("--k", score.k, "heldout: additive smoothing");
    sub_score->add_option("--min-count", score.min_count,
                          "heldout: unknown-token cutoff");
    sub_score->add_option("--k-copy", score.k_copy,
                          "heldout: copy distribution smoothing");
    sub_score->add_option("--lambda-init", score.lambda_init,
                          "heldout: EM starting weight");
    add_workers(sub_score, score.workers);

    BucketOpts bucket;
    auto* sub_bucket = app.add_subcommand(
        "bucket", "compute tag boundaries from a scored corpus");
    sub_bucket->add_option("--in", bucket.in, "scored corpus jsonl")
        ->required();
    sub_bucket->add_option("--out", bucket.out, "bucketer json path")
        ->required();
    sub_bucket->add_option("--by", bucket.by, "driving score: wo or lm");
    sub_bucket->add_option("--mode", bucket.mode, "fixed or quantile");

    AnnotateOpts annotate;
    auto* sub_annotate = app.add_subcommand(
        "annotate", "assign a tag to every scored example");
    sub_annotate->add_option("--in", annotate.in, "scored corpus jsonl")
        ->required();
    sub_annotate->add_option("--out", annotate.out, "tagged corpus jsonl")
        ->required();
    auto* an_by =
        sub_annotate->add_option("--by", annotate.by, "driving score: wo or lm");
    auto* an_mode =
        sub_annotate->add_option("--mode", annotate.mode, "fixed or quantile");
    sub_annotate
        ->add_option("--bucketer", annotate.bucketer,
                     "apply boundaries from a bucket artifact instead")
        ->excludes(an_by)
        ->excludes(an_mode);

    FilterOpts filter;
    auto* sub_filter = app.add_subcommand(
        "filter", "keep the cleanest fraction of a scored corpus");
    sub_filter->add_option("--in", filter.in, "scored corpus jsonl")
        ->required();
    sub_filter->add_option("--out", filter.out, "filtered corpus jsonl")
        ->required();
    sub_filter->add_option("--keep", filter.keep, "fraction to keep, (0, 1]")
        ->required();
    sub_filter->add_option("--by", filter.by, "driving score: wo or lm");

    TrainControlledOpts train_controlled;
    auto* sub_train_controlled = app.add_subcommand(
        "train-controlled", "fit per-tag copy weights on a tagged corpus");
    sub_train_controlled
        ->add_option("--in", train_controlled.in, "tagged corpus jsonl")
        ->required();
    sub_train_controlled
        ->add_option("--base", train_controlled.base, "ngram model")
        ->required();
    sub_train_controlled->add_option("--out", train_controlled.out,
                                     "model path")
        ->required();
    sub_train_controlled->add_option("--k-copy", train_controlled.k_copy,
                                     "copy distribution smoothing");
    sub_train_controlled->add_flag("--include-field-names",
                                   train_controlled.include_field_names,
                                   "copy candidates include field name tokens");
    sub_train_controlled->add_option("--lambda-init",
                                     train_controlled.lambda_init,
                                     "EM starting weight");

    GenerateOpts generate;
    auto* sub_generate = app.add_subcommand(
        "generate", "decode one prediction per source table");
    sub_generate->add_option("--in", generate.in, "corpus jsonl (sources)")
        ->required();
    sub_generate->add_option("--model", generate.model, "conditional model")
        ->required();
    sub_generate->add_option("--out", generate.out, "predictions jsonl")
        ->required();
    sub_generate->add_option("--tag", generate.tag,
                             "decode under this tag's weight (hal_0..hal_4)");
    sub_generate->add_option("--strategy", generate.strategy,
                             "greedy, beam or sample");
    sub_generate->add_option("--beam-width", generate.beam_width,
                             "beam strategy width");
    sub_generate->add_option("--max-len", generate.max_len,
                             "emission cap per prediction");
    sub_generate->add_option("--seed", generate.seed, "sampling seed");
    sub_generate->add_option("--temperature", generate.temperature,
                             "sampling sharpness");
    add_workers(sub_generate, generate.workers);

    KnobSweepOpts sweep;
    auto* sub_sweep = app.add_subcommand(
        "knob-sweep", "generate under every tag and tabulate the metrics");
    sub_sweep->add_option("--in", sweep.gen.in, "held-out corpus jsonl")
        ->required();
    sub_sweep->add_option("--model", sweep.gen.model, "conditional model")
        ->required();
    sub_sweep->add_option("--out", sweep.gen.out, "sweep json path")
        ->required();
    sub_sweep->add_option("--strategy", sweep.gen.strategy,
                          "greedy, beam or sample");
    sub_sweep->add_option("--beam-width", sweep.gen.beam_width,
                          "beam strategy width");
    sub_sweep->add_option("--max-len", sweep.gen.max_len,
                          "emission cap per prediction");
    sub_sweep->add_option("--seed", sweep.gen.seed, "sampling seed");
    sub_sweep->add_option("--temperature", sweep.gen.temperature,
                          "sampling sharpness");
    sub_sweep->add_flag("--gold-support", sweep.gold_support,
                        "judge support against the generator's ground truth");
    add_workers(sub_sweep, sweep.gen.workers);

    EvaluateOpts evaluate;
    auto* sub_evaluate = app.add_subcommand(
        "evaluate", "score predictions against reference examples");
    sub_evaluate->add_option("--pred", evaluate.pred, "predictions jsonl")
        ->required();
    sub_evaluate->add_option("--ref", evaluate.ref, "reference corpus jsonl")
        ->required();
    sub_evaluate->add_option("--out", evaluate.out, "report json path")
        ->required();
    sub_evaluate->add_flag("--gold-support", evaluate.gold_support,
                           "judge support against the generator's ground truth");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        throw usage_error(e.what());
    }

    if (sub_synth->parsed()) return cmd_synth(synth);
    if (sub_train_lm->parsed()) return cmd_train_lm(train_lm);
    if (sub_fit_cond->parsed()) return cmd_fit_cond(fit_cond);
    if (sub_score->parsed()) return cmd_score(score);
    if (sub_bucket->parsed()) return cmd_bucket(bucket);
    if (sub_annotate->parsed()) return cmd_annotate(annotate);
    if (sub_filter->parsed()) return cmd_filter(filter);
    if (sub_train_controlled->parsed())
        return cmd_train_controlled(train_controlled);
    if (sub_generate->parsed()) return cmd_generate(generate);
    if (sub_sweep->parsed()) return cmd_knob_sweep(sweep);
    if (sub_evaluate->parsed()) return cmd_evaluate(evaluate);
    throw usage_error("no subcommand");
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const usage_error& e) {
        return fail(kExitUsage, "usage", e.what());
    } catch (const io_error& e) {
        return fail(kExitIo, "io", e.what());
    } catch (const schema_error& e) {
        return fail(kExitSchema, "schema", e.what());
    } catch (const model_error& e) {
        return fail(kExitModel, "model", e.what());
    } catch (const halknob::error& e) {
        return fail(kExitInternal, "internal", e.what());
    } catch (const std::exception& e) {
        return fail(kExitInternal, "internal", e.what());
    }
}
