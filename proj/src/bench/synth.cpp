#include "vision/bench/synth.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <set>

#include "vision/cf/oracle.hpp"
#include "vision/cpg/lexer.hpp"
#include "vision/cpg/parser.hpp"
#include "vision/rng.hpp"

namespace vision::bench {

void SynthConfig::validate() const {
    std::string problems;
    auto prob = [&](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) problems += std::string(" ") + name + " must be in [0,1];";
    };
    if (n_pairs == 0) problems += " n_pairs must be > 0;";
    prob(spurious_strength, "spurious_strength");
    prob(p_sink, "p_sink");
    prob(p_second_site, "p_second_site");
    prob(p_partial_guard, "p_partial_guard");
    prob(p_distractor_guard, "p_distractor_guard");
    prob(p_constant_sink, "p_constant_sink");
    if (min_filler < 0 || max_filler < min_filler) problems += " filler range must satisfy 0 <= min <= max;";
    if (decoy.empty() || !(std::isalpha(static_cast<unsigned char>(decoy[0])) || decoy[0] == '_'))
        problems += " decoy must be an identifier;";
    if (!problems.empty()) throw ConfigError("invalid synthetic corpus config:" + problems);
}

namespace {

const std::vector<std::string> kVerbs{"get", "load", "read", "copy", "send", "store", "fetch", "update", "handle", "parse"};
const std::vector<std::string> kNouns{"screen", "entry", "name", "record", "packet", "config", "slot", "path", "buffer", "item"};
const std::vector<std::string> kIndexParams{"screen", "idx", "slot", "pos", "offset", "index", "row", "entry_id"};
const std::vector<std::string> kStringParams{"name", "path", "src", "input", "cmd", "user_input", "label", "msg"};
const std::vector<std::string> kPlainParams{"count", "len", "flags", "size", "limit", "level"};
const std::vector<std::string> kDeviceParams{"dev", "fd", "sock", "port"};
const std::vector<std::string> kArrays{"table", "slots", "cache", "grid", "screens", "values"};
const std::vector<std::string> kBuffers{"buf", "line", "dest", "tmp"};
const std::vector<std::string> kLogMessages{"start", "done", "retry", "skip", "ready"};

class Builder {
public:
    Builder(Rng& rng, const SynthConfig& cfg, Label label, bool decoy)
        : rng_(rng), cfg_(cfg), label_(label), decoy_(decoy) {
        for (const char* reserved : {"result", "mode", "i", "k"}) used_.insert(reserved);
    }

    std::string build() {
        is_void_ = rng_.bernoulli(0.2);
        const int n_sites = 1 + (rng_.bernoulli(cfg_.p_second_site) ? 1 : 0);
        std::vector<bool> safe(n_sites, true);
        if (label_ == Label::Vulnerable) {
            const auto forced = rng_.below(n_sites);
            for (int s = 0; s < n_sites; ++s)
                safe[s] = static_cast<std::size_t>(s) != forced && rng_.bernoulli(0.5);
        }
        const int n_plain = 1 + static_cast<int>(rng_.below(2));
        for (int i = 0; i < n_plain; ++i) plain_.push_back(fresh(kPlainParams));
        for (const auto& p : plain_) params_.push_back("int " + p);

        for (int s = 0; s < n_sites; ++s) {
            if (rng_.bernoulli(cfg_.p_sink))
                sink_site(safe[s]);
            else
                index_site(safe[s]);
        }
        if (rng_.bernoulli(cfg_.p_distractor_guard)) {
            const auto& c = rng_.pick(plain_);
            guards_.push_back(rng_.bernoulli(0.5) ? "if (" + c + " < 0) " + ret_fail() : "if (" + c + " > 100) " + ret_fail());
        }
        fillers();

        rng_.shuffle(params_);
        rng_.shuffle(guards_);
        rng_.shuffle(uses_);

        std::vector<std::string> body = decls_;
        if (!is_void_) body.insert(body.begin(), "int result = 0;");
        body.insert(body.end(), pre_.begin(), pre_.end());
        body.insert(body.end(), guards_.begin(), guards_.end());
        body.insert(body.end(), mid_.begin(), mid_.end());
        body.insert(body.end(), uses_.begin(), uses_.end());
        body.insert(body.end(), post_.begin(), post_.end());
        if (decoy_) {
            const auto at = rng_.below(body.size() + 1);
            body.insert(body.begin() + static_cast<std::ptrdiff_t>(at), "int mode = " + cfg_.decoy + ";");
        }
        if (!is_void_) body.push_back("return result;");

        std::string text = (is_void_ ? "void " : "int ") + rng_.pick(kVerbs) + "_" + rng_.pick(kNouns) + "(";
        for (std::size_t i = 0; i < params_.size(); ++i) text += (i ? ", " : "") + params_[i];
        text += ") {\n";
        for (const auto& s : body) text += "    " + s + "\n";
        text += "}\n";
        return text;
    }

private:
    std::string fresh(const std::vector<std::string>& pool) {
        std::vector<std::string> open;
        for (const auto& n : pool)
            if (!used_.count(n)) open.push_back(n);
        std::string name = open.empty() ? pool.front() + std::to_string(used_.size()) : rng_.pick(open);
        used_.insert(name);
        return name;
    }

    std::string ret_fail() {
        if (is_void_) return "return;";
        return rng_.bernoulli(0.5) ? "return 0;" : "return -1;";
    }

    void index_site(bool safe) {
        const std::string p = fresh(kIndexParams);
        const std::string arr = fresh(kArrays);
        const int n = std::array<int, 3>{8, 16, 32}[rng_.below(3)];
        params_.push_back("int " + p);
        if (rng_.bernoulli(0.5))
            decls_.push_back("int " + arr + "[" + std::to_string(n) + "];");
        else
            params_.push_back("int *" + arr);

        const std::string hi = std::to_string(n);
        const std::string hi1 = std::to_string(n - 1);
        if (safe) {
            switch (rng_.below(4)) {
                case 0: guards_.push_back("if (" + p + " < 0 || " + p + " >= " + hi + ") " + ret_fail()); break;
                case 1: guards_.push_back("if (" + p + " >= " + hi + " || " + p + " < 0) " + ret_fail()); break;
                case 2: guards_.push_back("if (0 > " + p + " || " + p + " > " + hi1 + ") " + ret_fail()); break;
                default: guards_.push_back("if (" + p + " < 0) " + ret_fail()); break;
            }
        } else if (rng_.bernoulli(cfg_.p_partial_guard)) {
            guards_.push_back(rng_.bernoulli(0.5) ? "if (" + p + " >= " + hi + ") " + ret_fail()
                                                  : "if (" + p + " > " + hi1 + ") " + ret_fail());
        }

        const auto& other = rng_.pick(plain_);
        switch (rng_.below(is_void_ ? 2 : 4)) {
            case 0: uses_.push_back(arr + "[" + p + "] = " + other + ";"); break;
            case 1: uses_.push_back("if (" + arr + "[" + p + "] > 0) { " + other + " = 0; }"); break;
            case 2: uses_.push_back("result = " + arr + "[" + p + "];"); break;
            default: uses_.push_back("result = result + " + arr + "[" + p + "];"); break;
        }
    }

    void sink_site(bool safe) {
        const std::string buf = fresh(kBuffers);
        const int len = std::array<int, 3>{32, 64, 128}[rng_.below(3)];
        const auto sink = rng_.below(4);
        std::string dev;
        if (sink == 3) {
            dev = fresh(kDeviceParams);
            params_.push_back("int " + dev);
        } else {
            decls_.push_back("char " + buf + "[" + std::to_string(len) + "];");
        }
        const bool constant = safe && rng_.bernoulli(cfg_.p_constant_sink);
        std::string s = fresh(kStringParams);
        std::string arg = s;
        if (constant) {
            arg = sink == 3 ? "NULL" : "\"default\"";
            // The parameter still exists but only reaches a harmless call.
            if (rng_.bernoulli(0.5)) {
                params_.push_back("char *" + s);
                mid_.push_back("log_msg(" + s + ");");
            }
        } else {
            params_.push_back("char *" + s);
        }

        const std::string l = std::to_string(len);
        const std::string l1 = std::to_string(len - 1);
        if (!constant && safe) {
            switch (rng_.below(4)) {
                case 0: guards_.push_back("if (strlen(" + s + ") >= " + l + ") " + ret_fail()); break;
                case 1: guards_.push_back("if (" + s + " == NULL || strlen(" + s + ") >= " + l + ") " + ret_fail()); break;
                case 2: guards_.push_back("if (" + l + " <= strlen(" + s + ")) " + ret_fail()); break;
                default: guards_.push_back("if (strlen(" + s + ") > " + l1 + ") " + ret_fail()); break;
            }
        } else if (!constant && rng_.bernoulli(cfg_.p_partial_guard)) {
            guards_.push_back("if (" + s + " == NULL) " + ret_fail());
        }

        switch (sink) {
            case 0: uses_.push_back("strcpy(" + buf + ", " + arg + ");"); break;
            case 1: uses_.push_back("strcat(" + buf + ", " + arg + ");"); break;
            case 2: uses_.push_back("sprintf(" + buf + ", \"%s\", " + arg + ");"); break;
            default:
                uses_.push_back(is_void_ ? "net_cmd(" + dev + ", " + arg + ");" : "result = net_cmd(" + dev + ", " + arg + ");");
                break;
        }
    }

    void fillers() {
        const int n = cfg_.min_filler + static_cast<int>(rng_.below(static_cast<std::uint64_t>(cfg_.max_filler - cfg_.min_filler + 1)));
        bool have_i = false, have_k = false;
        for (int f = 0; f < n; ++f) {
            const auto& c = rng_.pick(plain_);
            std::string stmt;
            switch (rng_.below(is_void_ ? 4 : 6)) {
                case 0: stmt = "log_msg(\"" + rng_.pick(kLogMessages) + "\");"; break;
                case 1: stmt = c + " = " + c + " + 1;"; break;
                case 2:
                    if (!have_i) decls_.push_back("int i = 0;");
                    have_i = true;
                    stmt = "while (i < " + c + ") { i = i + 1; }";
                    break;
                case 3: {
                    const std::string t = fresh({"tmp2", "total", "acc", "width"});
                    stmt = "int " + t + " = " + c + " * 2;";
                    break;
                }
                case 4:
                    if (!have_k) decls_.push_back("int k = 0;");
                    have_k = true;
                    stmt = "for (k = 0; k < 4; k++) { result = result + k; }";
                    break;
                default: stmt = "result = result + " + c + ";"; break;
            }
            switch (rng_.below(3)) {
                case 0: pre_.push_back(stmt); break;
                case 1: mid_.push_back(stmt); break;
                default: post_.push_back(stmt); break;
            }
        }
    }

    Rng& rng_;
    const SynthConfig& cfg_;
    Label label_;
    bool decoy_;
    bool is_void_ = false;
    std::set<std::string> used_;
    std::vector<std::string> plain_;
    std::vector<std::string> params_, decls_, pre_, guards_, mid_, uses_, post_;
};

}  // namespace

std::vector<SourceFunction> gen_synthetic_originals(const SynthConfig& cfg) {
    cfg.validate();
    std::vector<SourceFunction> out;
    out.reserve(cfg.n_pairs);
    for (std::size_t i = 0; i < cfg.n_pairs; ++i) {
        Rng rng(mix_seed(cfg.seed, i));
        const Label label = i % 2 == 0 ? Label::Benign : Label::Vulnerable;
        const bool decoy = rng.bernoulli(cfg.spurious_strength) ? label == Label::Benign : rng.bernoulli(0.5);
        Builder b(rng, cfg, label, decoy);
        const auto ast = cpg::parse_source(b.build());
        char id[32];
        std::snprintf(id, sizeof id, "synth-%05zu", i);
        SourceFunction f{id, cpg::print(*ast.root), label, Provenance::Original};
        if (cf::oracle_label(*ast.root) != label)
            throw Error("synthetic generator produced a mislabeled function '" + f.id + "':\n" + f.source);
        out.push_back(std::move(f));
    }
    return out;
}

bool has_decoy(const std::string& source, const std::string& decoy) {
    for (const auto& t : cpg::tokenize(source))
        if (t.lexeme == decoy) return true;
    return false;
}

SynthCorpus gen_synthetic_corpus(const SynthConfig& cfg) {
    SynthCorpus out;
    AugmentConfig acfg;
    acfg.seed = cfg.seed;
    out.augmentation = augment(gen_synthetic_originals(cfg), acfg);
    out.pairs = out.augmentation.pairs;
    return out;
}

}  // namespace vision::bench
