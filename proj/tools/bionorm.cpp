// bionorm — entity normalization pipeline driver.
//
// Subcommands: build-index, train, tune-threshold, predict, evaluate, synth.
// Configuration comes from flat key=value files plus flags; precedence is
// flags > config file > built-in defaults. Exit codes: 0 success, 1 user or
// data error, 2 internal error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bionorm/core.hpp"
#include "bionorm/fingerprint.hpp"
#include "bionorm/linker.hpp"
#include "bionorm/preprocess.hpp"
#include "bionorm/ranker.hpp"
#include "bionorm/retrieval.hpp"
#include "bionorm/synth.hpp"
#include "json.hpp"

namespace {

using namespace bionorm;

struct AppConfig {
    // input paths
    std::string kb, train, dev, test, docs, spelling, abbrev;
    // artifact paths
    std::string index_path = "index.bin";
    std::string checkpoint = "model.bin";
    std::string tau_path = "tau.json";
    std::string predictions = "predictions.jsonl";
    std::string report;
    std::string out_dir = "synth_out";
    // retrieval
    std::size_t top_k = 10;
    double k1 = 1.2, b = 0.75;
    // ranker
    int hidden = 64, layers = 2, heads = 4, max_len = 32, batch_size = 16, epochs = 10;
    double learning_rate = 1e-3, dropout = 0.1;
    bool allow_any_batch = false;
    // synth
    std::size_t n_concepts = 300;
    int min_synonyms = 2, max_synonyms = 4;
    std::size_t n_train = 2000, n_dev = 200, n_test = 500;
    double nil_fraction = 0.1, p_reorder = 0.5, p_misspell = 0.25, p_abbrev = 0.10, p_decor = 0.5;
    // global
    std::uint64_t seed = 1;
    bool verbose = false;
    std::string baseline;
};

// ---------------------------------------------------------------------------
// Config files: flat key=value, '#' comments. Unknown keys are rejected.
// ---------------------------------------------------------------------------

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t z = s.find_last_not_of(" \t\r\n");
    return s.substr(a, z - a + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream in(value);
    T out{};
    in >> out;
    if (in.fail() || !(in >> std::ws).eof())
        throw UserError("config key \"" + key + "\": invalid value \"" + value + "\"");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw UserError("config key \"" + key + "\": expected true/false, got \"" + value + "\"");
}

void apply_config_entry(AppConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "kb") cfg.kb = value;
    else if (key == "train") cfg.train = value;
    else if (key == "dev") cfg.dev = value;
    else if (key == "test") cfg.test = value;
    else if (key == "docs") cfg.docs = value;
    else if (key == "spelling") cfg.spelling = value;
    else if (key == "abbrev") cfg.abbrev = value;
    else if (key == "index") cfg.index_path = value;
    else if (key == "checkpoint") cfg.checkpoint = value;
    else if (key == "tau") cfg.tau_path = value;
    else if (key == "predictions") cfg.predictions = value;
    else if (key == "report") cfg.report = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "k") cfg.top_k = parse_number<std::size_t>(key, value);
    else if (key == "k1") cfg.k1 = parse_number<double>(key, value);
    else if (key == "b") cfg.b = parse_number<double>(key, value);
    else if (key == "hidden") cfg.hidden = parse_number<int>(key, value);
    else if (key == "layers") cfg.layers = parse_number<int>(key, value);
    else if (key == "heads") cfg.heads = parse_number<int>(key, value);
    else if (key == "max_len") cfg.max_len = parse_number<int>(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_number<int>(key, value);
    else if (key == "learning_rate") cfg.learning_rate = parse_number<double>(key, value);
    else if (key == "epochs") cfg.epochs = parse_number<int>(key, value);
    else if (key == "dropout") cfg.dropout = parse_number<double>(key, value);
    else if (key == "allow_any_batch") cfg.allow_any_batch = parse_bool(key, value);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "n_concepts") cfg.n_concepts = parse_number<std::size_t>(key, value);
    else if (key == "min_synonyms") cfg.min_synonyms = parse_number<int>(key, value);
    else if (key == "max_synonyms") cfg.max_synonyms = parse_number<int>(key, value);
    else if (key == "n_train") cfg.n_train = parse_number<std::size_t>(key, value);
    else if (key == "n_dev") cfg.n_dev = parse_number<std::size_t>(key, value);
    else if (key == "n_test") cfg.n_test = parse_number<std::size_t>(key, value);
    else if (key == "nil_fraction") cfg.nil_fraction = parse_number<double>(key, value);
    else if (key == "p_reorder") cfg.p_reorder = parse_number<double>(key, value);
    else if (key == "p_misspell") cfg.p_misspell = parse_number<double>(key, value);
    else if (key == "p_abbrev") cfg.p_abbrev = parse_number<double>(key, value);
    else if (key == "p_decor") cfg.p_decor = parse_number<double>(key, value);
    else
        throw UserError("config: unknown key \"" + key + "\"");
}

void load_config_file(AppConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UserError("config file not found: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw UserError(path + ":" + std::to_string(lineno) + ": expected key=value");
        apply_config_entry(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

void require_file(const std::string& path, const char* what) {
    if (path.empty())
        throw UserError(std::string("no ") + what + " path given");
    if (!std::filesystem::exists(path))
        throw UserError(std::string(what) + " file not found: " + path);
}

preprocess::PreprocessResources load_resources(const AppConfig& cfg) {
    preprocess::PreprocessResources r;
    if (!cfg.spelling.empty()) {
        require_file(cfg.spelling, "spelling lexicon");
        r.lexicon = preprocess::load_spelling_lexicon(cfg.spelling);
    }
    if (!cfg.abbrev.empty()) {
        require_file(cfg.abbrev, "abbreviation list");
        r.global_abbrevs = preprocess::load_abbreviation_list(cfg.abbrev);
    }
    if (!cfg.docs.empty()) {
        require_file(cfg.docs, "documents");
        r.detect_from_documents(load_documents(cfg.docs));
    }
    return r;
}

ranker::Hyperparams hyper_from(const AppConfig& cfg) {
    ranker::Hyperparams hp;
    hp.hidden = cfg.hidden;
    hp.layers = cfg.layers;
    hp.heads = cfg.heads;
    hp.max_len = cfg.max_len;
    hp.batch_size = cfg.batch_size;
    hp.learning_rate = cfg.learning_rate;
    hp.epochs = cfg.epochs;
    hp.seed = cfg.seed;
    hp.dropout = cfg.dropout;
    hp.allow_any_batch_size = cfg.allow_any_batch;
    return hp;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_build_index(const AppConfig& cfg) {
    require_file(cfg.kb, "knowledge base");
    require_file(cfg.train, "training dataset");
    KnowledgeBase kb = load_kb(cfg.kb);
    Dataset train = load_dataset(cfg.train, SplitTag::Train);
    preprocess::PreprocessResources resources = load_resources(cfg);

    retrieval::Index index = retrieval::build_index(kb, train, resources, cfg.k1, cfg.b);
    retrieval::save_index(index, cfg.index_path);

    nlohmann::json rep;
    rep["n_docs"] = index.N();
    rep["n_name_docs"] = index.report.n_name_docs;
    rep["n_mention_docs"] = index.report.n_mention_docs;
    rep["n_excluded"] = index.report.n_excluded;
    rep["excluded"] = index.report.excluded;
    rep["avgdl"] = index.avgdl;
    std::ofstream repf(cfg.index_path + ".report.json", std::ios::binary);
    if (!repf) throw UserError("cannot open output file: " + cfg.index_path + ".report.json");
    repf << rep.dump(2) << "\n";

    std::cout << "indexed " << index.N() << " documents (" << index.report.n_name_docs
              << " concept names, " << index.report.n_mention_docs << " training mentions), "
              << index.report.n_excluded << " inputs excluded; avgdl=" << index.avgdl << "\n";
    std::cout << "wrote " << cfg.index_path << " and " << cfg.index_path << ".report.json\n";
    if (cfg.verbose)
        for (const std::string& e : index.report.excluded)
            std::cout << "  excluded (no tokens): " << e << "\n";
}

void cmd_train(const AppConfig& cfg) {
    require_file(cfg.kb, "knowledge base");
    require_file(cfg.train, "training dataset");
    require_file(cfg.index_path, "index");
    if (!cfg.dev.empty()) require_file(cfg.dev, "development dataset");

    KnowledgeBase kb = load_kb(cfg.kb);
    Dataset full_train = load_dataset(cfg.train, SplitTag::Train);
    full_train.require_no_unknown("training");
    preprocess::PreprocessResources resources = load_resources(cfg);
    retrieval::Index index = retrieval::load_index(cfg.index_path);

    ranker::Hyperparams hp = hyper_from(cfg);
    hp.validate();

    Dataset train = full_train, dev;
    if (!cfg.dev.empty()) {
        dev = load_dataset(cfg.dev, SplitTag::Dev);
        dev.require_no_unknown("development");
    } else {
        auto parts = linker::split_train_dev(full_train);
        train = std::move(parts.first);
        dev = std::move(parts.second);
    }

    // Vocabulary covers every surface form the model may ever see in training.
    ranker::Vocab vocab = ranker::build_vocab(kb, full_train, resources);
    ranker::CrossEncoderModel model = ranker::CrossEncoderModel::create(std::move(vocab), hp);
    model.index_fingerprint = retrieval::index_fingerprint(index);

    std::vector<ranker::PairExample> pairs =
        ranker::make_training_pairs(train, index, kb, resources, cfg.top_k);
    if (pairs.empty()) throw UserError("no training pairs: training data has no linkable mentions");
    if (cfg.verbose)
        std::cout << "training on " << pairs.size() << " pairs, vocab " << model.vocab.size()
                  << ", dev " << dev.size() << " mentions\n";

    ranker::DevEvaluator dev_eval;
    if (dev.size() > 0) {
        dev_eval = [&](const ranker::CrossEncoderModel& m) {
            linker::LinkPipeline p;
            p.index = &index;
            p.model = &m;
            p.resources = &resources;
            p.top_k = cfg.top_k;
            auto scored = linker::score_dataset(dev, p);
            return static_cast<double>(linker::accuracy_count_at_tau(scored, 0.0)) /
                   static_cast<double>(dev.size());
        };
    }

    ranker::TrainResult result = ranker::train(model, pairs, dev_eval);
    ranker::save_checkpoint(model, cfg.checkpoint);

    nlohmann::json rep;
    rep["best_epoch"] = result.best_epoch;
    rep["epochs"] = nlohmann::json::array();
    for (const ranker::TrainReportEntry& e : result.epochs) {
        nlohmann::json obj;
        obj["epoch"] = e.epoch;
        obj["mean_loss"] = e.mean_loss;
        if (e.dev_accuracy) obj["dev_accuracy"] = *e.dev_accuracy;
        rep["epochs"].push_back(obj);
        std::cout << "epoch " << e.epoch << ": mean_loss=" << e.mean_loss;
        if (e.dev_accuracy) std::cout << " dev_accuracy=" << *e.dev_accuracy;
        std::cout << "\n";
    }
    std::ofstream repf(cfg.checkpoint + ".report.json", std::ios::binary);
    if (!repf) throw UserError("cannot open output file: " + cfg.checkpoint + ".report.json");
    repf << rep.dump(2) << "\n";
    std::cout << "best epoch " << result.best_epoch << "; wrote " << cfg.checkpoint << "\n";
}

void cmd_tune_threshold(const AppConfig& cfg) {
    require_file(cfg.index_path, "index");
    require_file(cfg.checkpoint, "checkpoint");
    require_file(cfg.dev, "development dataset");

    retrieval::Index index = retrieval::load_index(cfg.index_path);
    ranker::CrossEncoderModel model = ranker::load_checkpoint(cfg.checkpoint);
    if (model.index_fingerprint != retrieval::index_fingerprint(index))
        throw UserError("artifact mismatch: checkpoint " + cfg.checkpoint +
                        " was not trained against index " + cfg.index_path);
    Dataset dev = load_dataset(cfg.dev, SplitTag::Dev);
    dev.require_no_unknown("development");
    preprocess::PreprocessResources resources = load_resources(cfg);

    linker::NilThreshold tau = linker::learn_nil_threshold(model, index, dev, resources, cfg.top_k);
    linker::save_threshold(tau, ranker::checkpoint_fingerprint(model),
                           retrieval::index_fingerprint(index), cfg.tau_path);
    std::cout << "tau = " << tau.tau << "; wrote " << cfg.tau_path << "\n";
}

std::vector<linker::LinkDecision> load_predictions(const std::string& path) {
    std::vector<linker::LinkDecision> out;
    detail::for_each_jsonl(path, [&](std::size_t lineno, const nlohmann::json& obj) {
        linker::LinkDecision d;
        d.doc_id = detail::require_string(obj, "doc_id", path, lineno);
        d.mention_text = detail::require_string(obj, "mention", path, lineno);
        std::string pred = detail::require_string(obj, "predicted", path, lineno);
        d.predicted = pred == "NIL" ? GoldLabel::nil() : GoldLabel::linked(ConceptId(pred));
        if (!obj.contains("score") || !obj["score"].is_number())
            throw UserError(path + ":" + std::to_string(lineno) + ": missing numeric \"score\"");
        d.score = obj["score"].get<double>();
        out.push_back(std::move(d));
    });
    return out;
}

void cmd_predict(const AppConfig& cfg) {
    require_file(cfg.test, "input dataset");
    require_file(cfg.index_path, "index");

    Dataset input = load_dataset(cfg.test, SplitTag::Test);
    preprocess::PreprocessResources resources = load_resources(cfg);
    retrieval::Index index = retrieval::load_index(cfg.index_path);

    std::vector<linker::LinkDecision> decisions;
    if (!cfg.baseline.empty()) {
        if (cfg.baseline != "bm25")
            throw UserError("unknown baseline \"" + cfg.baseline + "\" (supported: bm25)");
        for (const Mention& m : input.mentions) {
            linker::LinkDecision d;
            d.doc_id = m.doc_id;
            d.mention_text = m.text;
            std::vector<preprocess::Token> toks = resources.normalize_mention(m);
            std::vector<retrieval::Candidate> cands =
                toks.empty() ? std::vector<retrieval::Candidate>{}
                             : retrieval::retrieve_candidates(index, toks, cfg.top_k);
            if (cands.empty()) {
                d.predicted = GoldLabel::nil();
                d.score = 0.0;
            } else {
                d.predicted = GoldLabel::linked(cands.front().concept_id);
                d.score = cands.front().bm25;
            }
            decisions.push_back(std::move(d));
        }
    } else {
        require_file(cfg.checkpoint, "checkpoint");
        require_file(cfg.tau_path, "threshold");
        ranker::CrossEncoderModel model = ranker::load_checkpoint(cfg.checkpoint);
        linker::StoredThreshold st = linker::load_threshold(cfg.tau_path);
        std::uint64_t index_fp = retrieval::index_fingerprint(index);
        if (model.index_fingerprint != index_fp)
            throw UserError("artifact mismatch: checkpoint " + cfg.checkpoint +
                            " was not trained against index " + cfg.index_path);
        if (st.checkpoint_fingerprint != ranker::checkpoint_fingerprint(model))
            throw UserError("artifact mismatch: threshold " + cfg.tau_path +
                            " was not tuned for checkpoint " + cfg.checkpoint);
        if (st.index_fingerprint != index_fp)
            throw UserError("artifact mismatch: threshold " + cfg.tau_path +
                            " was not tuned against index " + cfg.index_path);

        linker::LinkPipeline pipeline;
        pipeline.index = &index;
        pipeline.model = &model;
        pipeline.resources = &resources;
        pipeline.tau = st.tau;
        pipeline.top_k = cfg.top_k;
        decisions = linker::link_dataset(input, pipeline);
    }

    linker::save_predictions(decisions, cfg.predictions);
    std::cout << "wrote " << decisions.size() << " predictions to " << cfg.predictions << "\n";
}

void cmd_evaluate(const AppConfig& cfg) {
    require_file(cfg.predictions, "predictions");
    require_file(cfg.test, "gold dataset");
    std::vector<linker::LinkDecision> preds = load_predictions(cfg.predictions);
    Dataset gold = load_dataset(cfg.test, SplitTag::Test);
    if (preds.size() != gold.size())
        throw UserError("alignment mismatch: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(gold.size()) + " gold mentions");
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const Mention& m = gold.mentions[i];
        if (preds[i].doc_id != m.doc_id || preds[i].mention_text != m.text)
            throw UserError("alignment mismatch at line " + std::to_string(i + 1) +
                            ": prediction for \"" + preds[i].mention_text +
                            "\" does not match gold mention \"" + m.text + "\"");
    }

    linker::EvalReport report = linker::make_eval_report(preds, gold);
    linker::save_eval_report(report, std::cout);
    if (!cfg.report.empty()) {
        std::ofstream out(cfg.report, std::ios::binary);
        if (!out) throw UserError("cannot open output file: " + cfg.report);
        linker::save_eval_report(report, out);
    }
}

void cmd_synth(const AppConfig& cfg) {
    synth::SynthSpec spec;
    spec.n_concepts = cfg.n_concepts;
    spec.min_synonyms = cfg.min_synonyms;
    spec.max_synonyms = cfg.max_synonyms;
    spec.n_train = cfg.n_train;
    spec.n_dev = cfg.n_dev;
    spec.n_test = cfg.n_test;
    spec.nil_fraction = cfg.nil_fraction;
    spec.p_reorder = cfg.p_reorder;
    spec.p_misspell = cfg.p_misspell;
    spec.p_abbrev = cfg.p_abbrev;
    spec.p_decor = cfg.p_decor;
    spec.seed = cfg.seed;

    synth::SynthOutput out = synth::generate(spec);
    synth::write_synth(out, cfg.out_dir);
    std::cout << "generated " << out.kb.size() << " concepts; train/dev/test = " << out.train.size()
              << "/" << out.dev.size() << "/" << out.test.size() << " mentions (nil "
              << out.train.unlinkable_count() << "/" << out.dev.unlinkable_count() << "/"
              << out.test.unlinkable_count() << "); " << out.docs.size() << " documents, "
              << out.spelling.size() << " spelling entries\n";
    std::cout << "wrote kb.jsonl, train.jsonl, dev.jsonl, test.jsonl, docs.jsonl, spelling.tsv to "
              << cfg.out_dir << "\n";
}

// ---------------------------------------------------------------------------

int run(int argc, char** argv) {
    AppConfig cfg;

    // The config file must be applied before flag parsing so flags win.
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) load_config_file(cfg, argv[i + 1]);
        else if (arg.rfind("--config=", 0) == 0) load_config_file(cfg, arg.substr(9));
    }

    CLI::App app{"biomedical entity normalization pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "flat key=value configuration file");
    app.add_option("--seed", cfg.seed, "random seed");
    app.add_flag("--verbose", cfg.verbose, "print extra progress detail");

    auto add_resource_opts = [&](CLI::App* sub) {
        sub->add_option("--docs", cfg.docs, "documents file (abbreviation contexts), jsonl");
        sub->add_option("--spelling", cfg.spelling, "spelling lexicon, tsv");
        sub->add_option("--abbrev", cfg.abbrev, "global abbreviation list, tsv");
    };

    CLI::App* build = app.add_subcommand("build-index", "build the candidate retrieval index");
    build->add_option("--kb", cfg.kb, "knowledge base, jsonl");
    build->add_option("--train", cfg.train, "training dataset, jsonl");
    build->add_option("--index", cfg.index_path, "output index path");
    build->add_option("--k1", cfg.k1, "BM25 k1");
    build->add_option("--b", cfg.b, "BM25 b");
    add_resource_opts(build);
    build->callback([&] { cmd_build_index(cfg); });

    CLI::App* train = app.add_subcommand("train", "train the cross-encoder reranker");
    train->add_option("--kb", cfg.kb, "knowledge base, jsonl");
    train->add_option("--train", cfg.train, "training dataset, jsonl");
    train->add_option("--dev", cfg.dev, "development dataset, jsonl (default: last 10% of train)");
    train->add_option("--index", cfg.index_path, "index path");
    train->add_option("--checkpoint", cfg.checkpoint, "output checkpoint path");
    train->add_option("--k", cfg.top_k, "candidates per mention");
    train->add_option("--hidden", cfg.hidden, "hidden size");
    train->add_option("--layers", cfg.layers, "encoder layers");
    train->add_option("--heads", cfg.heads, "attention heads");
    train->add_option("--max-len", cfg.max_len, "maximum sequence length");
    train->add_option("--batch-size", cfg.batch_size, "batch size (16 or 32)");
    train->add_option("--learning-rate", cfg.learning_rate, "Adam learning rate");
    train->add_option("--epochs", cfg.epochs, "training epochs (1..10)");
    train->add_option("--dropout", cfg.dropout, "dropout probability");
    train->add_flag("--allow-any-batch", cfg.allow_any_batch,
                    "lift the 16/32 batch size restriction");
    add_resource_opts(train);
    train->callback([&] { cmd_train(cfg); });

    CLI::App* tune = app.add_subcommand("tune-threshold", "learn the NIL threshold on dev data");
    tune->add_option("--dev", cfg.dev, "development dataset, jsonl");
    tune->add_option("--index", cfg.index_path, "index path");
    tune->add_option("--checkpoint", cfg.checkpoint, "checkpoint path");
    tune->add_option("--tau", cfg.tau_path, "output threshold path");
    tune->add_option("--k", cfg.top_k, "candidates per mention");
    add_resource_opts(tune);
    tune->callback([&] { cmd_tune_threshold(cfg); });

    CLI::App* predict = app.add_subcommand("predict", "link mentions to concepts");
    predict->add_option("--test", cfg.test, "input dataset, jsonl");
    predict->add_option("--index", cfg.index_path, "index path");
    predict->add_option("--checkpoint", cfg.checkpoint, "checkpoint path");
    predict->add_option("--tau", cfg.tau_path, "threshold path");
    predict->add_option("--predictions", cfg.predictions, "output predictions path");
    predict->add_option("--k", cfg.top_k, "candidates per mention");
    predict->add_option("--baseline", cfg.baseline, "skip the ranker: bm25 = BM25 top-1");
    add_resource_opts(predict);
    predict->callback([&] { cmd_predict(cfg); });

    CLI::App* evaluate = app.add_subcommand("evaluate", "score predictions against gold labels");
    evaluate->add_option("--predictions", cfg.predictions, "predictions, jsonl");
    evaluate->add_option("--test", cfg.test, "gold dataset, jsonl");
    evaluate->add_option("--report", cfg.report, "also write the report to this path");
    evaluate->callback([&] { cmd_evaluate(cfg); });

    CLI::App* syn = app.add_subcommand("synth", "generate a synthetic corpus");
    syn->add_option("--out-dir", cfg.out_dir, "output directory");
    syn->add_option("--n-concepts", cfg.n_concepts, "number of concepts");
    syn->add_option("--min-synonyms", cfg.min_synonyms, "minimum names per concept");
    syn->add_option("--max-synonyms", cfg.max_synonyms, "maximum names per concept");
    syn->add_option("--n-train", cfg.n_train, "training mentions");
    syn->add_option("--n-dev", cfg.n_dev, "development mentions");
    syn->add_option("--n-test", cfg.n_test, "test mentions");
    syn->add_option("--nil-fraction", cfg.nil_fraction, "fraction of NIL mentions, [0,1)");
    syn->add_option("--p-reorder", cfg.p_reorder, "probability of token reordering");
    syn->add_option("--p-misspell", cfg.p_misspell, "probability of misspelling injection");
    syn->add_option("--p-abbrev", cfg.p_abbrev, "probability of abbreviation form");
    syn->add_option("--p-decor", cfg.p_decor, "probability of decor token append");
    syn->callback([&] { cmd_synth(cfg); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UserError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}
