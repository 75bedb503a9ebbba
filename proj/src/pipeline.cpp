#include "vision/pipeline.hpp"

namespace vision::pipeline {

void TrainOptions::validate() const {
    std::string problems;
    auto collect = [&](auto&& check) {
        try {
            check();
        } catch (const ConfigError& e) {
            std::string msg = e.what();
            if (msg.empty() || msg.back() != ';') msg += ';';
            problems += " " + msg;
        }
    };
    collect([&] { skipgram.validate(); });
    collect([&] { train.validate(); });
    auto m = model;
    m.d_in = skipgram.dim + embed::kKindDims;
    collect([&] { m.validate(); });
    if (min_count < 1) problems += " min_count must be >= 1;";
    if (!problems.empty()) throw ConfigError("invalid training options:" + problems);
}

ggnn::TrainedModel train_benchmark(const bench::Benchmark& b, const TrainOptions& opt,
                                   const ggnn::EpochCallback& on_epoch) {
    opt.validate();
    std::vector<SourceFunction> train_fns;
    train_fns.reserve(b.train.size());
    for (const auto& e : b.train) train_fns.push_back(e.fn);
    auto table = embed::pretrain_skipgram(train_fns, embed::build_vocab(train_fns, opt.min_count), opt.skipgram).table;
    std::vector<ggnn::GraphInput> tr, va;
    for (const auto& f : train_fns) tr.push_back(ggnn::make_input(cpg::assemble_cpg(f), table));
    for (const auto& e : b.val) va.push_back(ggnn::make_input(cpg::assemble_cpg(e.fn), table));
    auto mc = opt.model;
    mc.d_in = table.dim() + embed::kKindDims;
    return ggnn::train(tr, va, mc, opt.train, std::move(table), on_epoch);
}

Evaluation evaluate(const ggnn::TrainedModel& m, const std::vector<SourceFunction>& test, const std::string& split,
                    const EvalOptions& opt) {
    Evaluation ev;
    metrics::ReportInputs in;
    in.fns = test;
    ev.embeddings.resize(static_cast<Eigen::Index>(test.size()), m.params.cfg.c2);
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto g = cpg::assemble_cpg(test[i]);
        const auto input = m.input(g);
        const auto fw = ggnn::forward(m.params, input);
        ev.predictions.push_back(ggnn::predict_logits(fw.logits));
        in.preds.push_back(ev.predictions.back().label);
        ev.embeddings.row(static_cast<Eigen::Index>(i)) = fw.graph_embedding.transpose();
        if (opt.attributions) {
            ev.attributions.push_back(explain::attribute(m.params, input, opt.explainer, test[i].id));
            in.signatures.push_back(metrics::attribution_signature(ev.attributions.back().scores, g));
        }
    }
    in.embeddings = ev.embeddings;
    ev.report = metrics::compute_report(split, in, opt.report);
    ev.projection = metrics::project_2d(ev.embeddings);
    return ev;
}

}  // namespace vision::pipeline
