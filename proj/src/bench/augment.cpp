#include "vision/bench/augment.hpp"

#include <json.hpp>

#include "vision/rng.hpp"

namespace vision::bench {

AugmentResult augment(const std::vector<SourceFunction>& originals, const AugmentConfig& cfg) {
    AugmentResult out;
    for (const auto& orig : originals) {
        if (orig.provenance != Provenance::Original) continue;
        AugmentRecord rec;
        rec.id = orig.id;
        cf::CounterfactualCandidate cand;
        try {
            if (cfg.llm) {
                rec.generator = "llm:" + cfg.llm->model_tag;
                cand.paired_id = orig.id;
                cand.target_label = flip(orig.label);
                cand.generator = cf::GeneratorKind::Llm;
                cand.generator_tag = cfg.llm->model_tag;
                cand.source = cf::request_llm(cf::build_llm_prompt(orig, orig.cwe), *cfg.llm);
            } else {
                cand = cf::generate_rule_based(orig, mix_seed(cfg.seed, fnv1a64(orig.id)));
                rec.generator = "rule:" + cand.generator_tag;
            }
        } catch (const cf::NoApplicableRule& e) {
            rec.reason = "NoApplicableRule";
            rec.detail = e.what();
            out.records.push_back(std::move(rec));
            continue;
        } catch (const cf::LlmError& e) {
            // Recorded against the id; the function is skipped.
            rec.reason = "LlmError";
            rec.detail = e.what();
            out.records.push_back(std::move(rec));
            continue;
        } catch (const Error& e) {
            rec.reason = "ParseError";
            rec.detail = std::string("original: ") + e.what();
            out.records.push_back(std::move(rec));
            continue;
        }
        const auto v = cf::validate_counterfactual(orig, cand, cfg.policy);
        if (v.reason != cf::RejectReason::ParseError) {
            try {
                cand.edit_distance = cf::token_edit_distance(orig.source, cand.source);
            } catch (const Error&) {
            }
        }
        rec.edit_distance = cand.edit_distance;
        rec.accepted = v.accepted;
        rec.reason = v.accepted ? "" : std::string(to_string(v.reason));
        rec.detail = v.detail;
        if (v.accepted) {
            SourceFunction cf_fn{orig.id, cand.source, cand.target_label, Provenance::Counterfactual, orig.cwe};
            out.pairs.push_back({orig, std::move(cf_fn)});
        } else {
            out.rejected.push_back(std::move(cand));
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

std::string augment_manifest_jsonl(const AugmentResult& result, const std::string& original_path,
                                   const std::string& counterfactual_path) {
    std::string out;
    for (const auto& r : result.records) {
        nlohmann::json validation = r.accepted ? nlohmann::json("accept")
                                               : nlohmann::json{{"reject", r.reason}, {"detail", r.detail}};
        nlohmann::json rec{{"id", r.id},
                           {"original_path", original_path},
                           {"counterfactual_path", r.accepted ? nlohmann::json(counterfactual_path) : nlohmann::json()},
                           {"generator", r.generator},
                           {"edit_distance", r.edit_distance},
                           {"validation", validation}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

}  // namespace vision::bench
