#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <thread>

// Eigen must come before httplib: <resolv.h> defines a `_res` macro.
#include "vision/bench/dataset.hpp"
#include "vision/service/service.hpp"

#include <httplib.h>

using namespace vision;
using namespace vision::service;
using nlohmann::json;

namespace {

std::vector<std::pair<std::string, SourceFunction>> paired_functions(int n) {
    std::vector<std::pair<std::string, SourceFunction>> out;
    const char* extra[] = {"a = a + 1;", "puts(a);", "if (a > 3) { a = 3; }", ""};
    for (int i = 0; i < n; ++i) {
        const std::string id = "fn-" + std::to_string(100 + i);
        const std::string body = extra[i % 4];
        SourceFunction orig{id, "int f(int a) { " + body + " gets(a); return a; }", Label::Vulnerable, Provenance::Original};
        SourceFunction cf{id, "int f(int a) { " + body + " puts(a); return a; }", Label::Benign, Provenance::Counterfactual};
        if (i % 2) std::swap(orig.label, cf.label), std::swap(orig.source, cf.source);
        out.emplace_back(i < n - 2 ? "test" : "val", orig);
        out.emplace_back(i < n - 2 ? "test" : "val", cf);
    }
    return out;
}

ggnn::TrainedModel small_model(const std::vector<std::pair<std::string, SourceFunction>>& fns) {
    std::vector<SourceFunction> corpus;
    for (const auto& [s, f] : fns) corpus.push_back(f);
    embed::SkipgramConfig sg;
    sg.dim = 6;
    sg.epochs = 1;
    auto table = embed::pretrain_skipgram(corpus, embed::build_vocab(corpus, 1), sg).table;
    std::vector<ggnn::GraphInput> inputs;
    for (const auto& f : corpus) inputs.push_back(ggnn::make_input(cpg::assemble_cpg(f), table));
    ggnn::ModelConfig mc;
    mc.d_in = static_cast<int>(inputs[0].x.cols());
    mc.d_h = 8;
    mc.steps = 2;
    mc.c1 = 6;
    mc.c2 = 4;
    ggnn::TrainConfig tc;
    tc.epochs = 15;
    tc.lr = 0.01;
    return ggnn::train(inputs, {}, mc, tc, table);
}

metrics::MetricsReport sample_report(const std::string& split) {
    metrics::MetricsReport r;
    r.split = split;
    r.standard.accuracy = 0.75;
    r.pairwise = {50, 25, 25, 0};
    r.wga = {0.5, 0.5, 0.25, 0.25, 0.25, 0.0};
    r.purity = 0.9;
    return r;
}

ServiceConfig fast_config(const std::filesystem::path& cache = {}) {
    ServiceConfig c;
    c.explainer.iterations = 30;
    c.cache_dir = cache;
    c.default_page_size = 5;
    return c;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("vision-service-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

class Running {
public:
    explicit Running(Inspector& inspector) {
        install_routes(server_, inspector, "http://ui.local");
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~Running() {
        server_.stop();
        thread_.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(120);
        return c;
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

class ServiceTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        functions_ = new auto(paired_functions(8));
        model_ = new auto(small_model(*functions_));
    }
    static void TearDownTestSuite() {
        delete functions_;
        delete model_;
    }
    static std::vector<std::pair<std::string, SourceFunction>>* functions_;
    static ggnn::TrainedModel* model_;

    Inspector make(const std::filesystem::path& cache = {}) {
        return Inspector(*model_, *functions_, {sample_report("100/0"), sample_report("50/50")}, fast_config(cache));
    }
};

std::vector<std::pair<std::string, SourceFunction>>* ServiceTest::functions_ = nullptr;
ggnn::TrainedModel* ServiceTest::model_ = nullptr;

json get_json(httplib::Client& c, const std::string& path, int expect = 200) {
    auto r = c.Get(path);
    EXPECT_TRUE(r) << path;
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << " " << r->body;
    return json::parse(r->body);
}

}  // namespace

TEST_F(ServiceTest, HealthAndCors) {
    auto ins = make();
    Running srv(ins);
    auto c = srv.client();
    const auto h = get_json(c, "/api/v1/health");
    EXPECT_EQ(h["status"], "ok");
    EXPECT_EQ(h["functions"], 16);
    EXPECT_EQ(h["checkpoint_id"], ins.checkpoint_id());
    auto r = c.Get("/api/v1/health");
    EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "http://ui.local");
    auto pre = c.Options("/api/v1/functions/fn-100/what-if");
    ASSERT_TRUE(pre);
    EXPECT_EQ(pre->status, 204);
    EXPECT_NE(pre->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
    const auto missing = get_json(c, "/api/v1/nope", 404);
    EXPECT_EQ(missing["error"], "NotFound");
}

TEST_F(ServiceTest, ListingFiltersAndPaginates) {
    auto ins = make();
    Running srv(ins);
    auto c = srv.client();
    std::multiset<std::string> seen;
    std::vector<std::string> order;
    const auto first = get_json(c, "/api/v1/functions?page_size=3");
    EXPECT_EQ(first["total"], 16);
    for (int page = 0; page < first["pages"].get<int>(); ++page) {
        const auto body = get_json(c, "/api/v1/functions?page_size=3&page=" + std::to_string(page));
        for (const auto& it : body["items"]) {
            seen.insert(it["id"].get<std::string>() + "/" + it["provenance"].get<std::string>());
            order.push_back(it["id"]);
            EXPECT_EQ(it["correct"], it["prediction"] == it["label"]);
        }
    }
    EXPECT_EQ(seen.size(), 16u);
    EXPECT_EQ(std::set<std::string>(seen.begin(), seen.end()).size(), 16u);
    EXPECT_TRUE(std::is_sorted(order.begin(), order.end()));

    const auto vulnerable = get_json(c, "/api/v1/functions?label=Vulnerable&page_size=100");
    EXPECT_EQ(vulnerable["items"].size(), 8u);
    for (const auto& it : vulnerable["items"]) EXPECT_EQ(it["label"], "Vulnerable");
    EXPECT_EQ(get_json(c, "/api/v1/functions?split=val&page_size=100")["total"], 4);
    EXPECT_EQ(get_json(c, "/api/v1/functions?provenance=Counterfactual&split=test")["total"], 6);
    get_json(c, "/api/v1/functions?label=Maybe", 400);
    get_json(c, "/api/v1/functions?page_size=0", 400);
    get_json(c, "/api/v1/functions?colour=red", 400);

    Inspector empty(*model_, {}, {}, fast_config());
    const auto page = empty.list_functions({});
    EXPECT_TRUE(page["items"].empty());
    EXPECT_EQ(page["total"], 0);
}

TEST_F(ServiceTest, ExplanationPayloadAndCache) {
    auto ins = make();
    Running srv(ins);
    auto c = srv.client();
    auto a = c.Get("/api/v1/functions/fn-101/explanation?provenance=Counterfactual");
    ASSERT_TRUE(a);
    ASSERT_EQ(a->status, 200);
    const auto p = json::parse(a->body);
    EXPECT_EQ(p["scores"].size(), p["nodes"].size());
    const auto source = p["source"].get<std::string>();
    for (const auto& n : p["nodes"]) {
        EXPECT_LE(n["span"]["begin"].get<std::size_t>(), n["span"]["end"].get<std::size_t>());
        EXPECT_LE(n["span"]["end"].get<std::size_t>(), source.size());
    }
    EXPECT_EQ(p["label"], "Vulnerable");
    auto b = c.Get("/api/v1/functions/fn-101/explanation?provenance=Counterfactual");
    EXPECT_EQ(a->body, b->body);
    const auto err = get_json(c, "/api/v1/functions/ghost/explanation", 404);
    EXPECT_EQ(err["error"], "UnknownFunction");
    get_json(c, "/api/v1/functions/fn-101/explanation?provenance=Upsampled", 400);
}

TEST_F(ServiceTest, ConcurrentIdenticalRequestsAgree) {
    auto ins = make();
    Running srv(ins);
    std::vector<std::string> bodies(4);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&, t] {
            auto c = srv.client();
            auto r = c.Get("/api/v1/functions/fn-102/dependency");
            if (r) bodies[static_cast<std::size_t>(t)] = r->body;
        });
    for (auto& t : threads) t.join();
    EXPECT_FALSE(bodies[0].empty());
    for (const auto& b : bodies) EXPECT_EQ(b, bodies[0]);
}

TEST_F(ServiceTest, SubgraphModes) {
    auto ins = make();
    Running srv(ins);
    auto c = srv.client();
    for (const auto& [split, fn] : *functions_) {
        const std::string base = "/api/v1/functions/" + fn.id + "/subgraph?provenance=" + std::string(to_string(fn.provenance));
        const auto pos = get_json(c, base + "&mode=positive");
        const auto& trace = pos["trace"];
        ASSERT_EQ(trace.size(), pos["model_calls"].get<std::size_t>());
        if (!pos["exhausted"].get<bool>()) {
            EXPECT_EQ(trace.back()["prediction"], to_string(fn.label));
            EXPECT_TRUE(pos["flag"].is_null());
        } else {
            EXPECT_EQ(pos["flag"], "never_recovered");
        }
        const auto neg = get_json(c, base + "&mode=negative");
        EXPECT_EQ(neg["trace"].size(), neg["nodes"].size() + 1);
        EXPECT_TRUE(neg["trace"][0]["node"].is_null());
        const auto opt = get_json(c, base + "&mode=optimal");
        EXPECT_EQ(opt["trace"].size(), opt["order"].size());
    }
    get_json(c, "/api/v1/functions/fn-100/subgraph?mode=sideways", 400);

    // A model whose output ignores the graph never flips.
    auto constant = *model_;
    for (auto* t : constant.params.tensors()) t->setZero();
    constant.params.out_b(1, 0) = 1.0;
    Inspector flat(constant, *functions_, {}, fast_config());
    const auto neg = flat.subgraph("fn-100", "Original", "negative");
    EXPECT_EQ(neg["flag"], "never_flipped");
}

TEST_F(ServiceTest, WhatIfAgreesWithExplanationAndDependency) {
    auto ins = make();
    Running srv(ins);
    auto c = srv.client();
    for (const auto& [split, fn] : *functions_) {
        const std::string prov(to_string(fn.provenance));
        const auto expl = get_json(c, "/api/v1/functions/" + fn.id + "/explanation?provenance=" + prov);
        auto r = c.Post("/api/v1/functions/" + fn.id + "/what-if", json{{"provenance", prov}, {"node_ids", json::array()}}.dump(),
                        "application/json");
        ASSERT_TRUE(r);
        ASSERT_EQ(r->status, 200) << r->body;
        const auto w = json::parse(r->body);
        EXPECT_EQ(w["scores"], expl["scores"]);
        EXPECT_EQ(w["prediction"], expl["prediction"]);
        EXPECT_EQ(w["confidence"], expl["confidence"]);
    }

    const auto dep = get_json(c, "/api/v1/functions/fn-103/dependency");
    const int n = dep["n"];
    ASSERT_EQ(dep["m"].size(), static_cast<std::size_t>(n));
    ASSERT_EQ(dep["labels"].size(), static_cast<std::size_t>(n));
    for (int i = 0; i < n; i += 3) {
        auto r = c.Post("/api/v1/functions/fn-103/what-if", json{{"node_ids", {i}}}.dump(), "application/json");
        ASSERT_EQ(r->status, 200);
        const auto w = json::parse(r->body);
        EXPECT_TRUE(w["delta"][static_cast<std::size_t>(i)].is_null());
        for (int j = 0; j < n; ++j)
            if (j != i) EXPECT_EQ(w["delta"][static_cast<std::size_t>(j)], dep["m"][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
    }
    const auto zero = get_json(c, "/api/v1/functions/fn-103/dependency?policy=feature-zero");
    EXPECT_EQ(zero["policy"], "feature-zero");
    auto r = c.Post("/api/v1/functions/fn-103/what-if", json{{"node_ids", {1}}, {"policy", "feature-zero"}}.dump(),
                    "application/json");
    const auto w = json::parse(r->body);
    for (int j = 0; j < n; ++j)
        if (j != 1) EXPECT_EQ(w["delta"][static_cast<std::size_t>(j)], zero["m"][1][static_cast<std::size_t>(j)]);

    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    const std::string url = "/api/v1/functions/fn-103/what-if";
    EXPECT_EQ(c.Post(url, json{{"node_ids", all}}.dump(), "application/json")->status, 400);
    EXPECT_EQ(c.Post(url, json{{"node_ids", {n}}}.dump(), "application/json")->status, 400);
    EXPECT_EQ(c.Post(url, json{{"node_ids", {0, 0}}}.dump(), "application/json")->status, 400);
    EXPECT_EQ(c.Post(url, json{{"node_ids", {"a"}}}.dump(), "application/json")->status, 400);
    EXPECT_EQ(c.Post(url, "not json", "application/json")->status, 400);
    EXPECT_EQ(c.Post("/api/v1/functions/ghost/what-if", json{{"node_ids", json::array()}}.dump(), "application/json")->status,
              404);
}

TEST_F(ServiceTest, MetricsAndProjection) {
    auto ins = make();
    Running srv(ins);
    auto c = srv.client();
    const auto r = get_json(c, "/api/v1/metrics/50_50");
    EXPECT_EQ(r["split"], "50/50");
    for (const auto& col : metrics::report_columns()) EXPECT_TRUE(r.contains(col)) << col;
    EXPECT_EQ(get_json(c, "/api/v1/metrics/100-0")["split"], "100/0");
    get_json(c, "/api/v1/metrics/30_70", 404);
    EXPECT_EQ(get_json(c, "/api/v1/metrics")["reports"].size(), 2u);
    const auto p = get_json(c, "/api/v1/projection");
    EXPECT_EQ(p["points"].size(), 16u);
    EXPECT_EQ(get_json(c, "/api/v1/projection"), p);
}

TEST_F(ServiceTest, DiskCacheSurvivesRestart) {
    const auto dir = temp_dir("cache");
    std::string first_dep, first_expl;
    {
        auto ins = make(dir);
        first_dep = ins.dependency("fn-104", "Original", "");
        first_expl = ins.explanation("fn-104", "Original");
    }
    std::size_t files = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        files += e.is_regular_file();
        EXPECT_NE(e.path().extension(), ".tmp");
    }
    EXPECT_GE(files, 2u);
    auto again = make(dir);
    EXPECT_EQ(again.dependency("fn-104", "Original", ""), first_dep);
    EXPECT_EQ(again.explanation("fn-104", "Original"), first_expl);
    std::filesystem::remove_all(dir);
}

TEST_F(ServiceTest, LoadsFromFiles) {
    const auto dir = temp_dir("files");
    bench::write_file_atomic(dir / "model.ckpt", ggnn::serialize_checkpoint(*model_));
    std::vector<SourceFunction> test;
    for (const auto& [split, fn] : *functions_) test.push_back(fn);
    bench::write_dataset(dir / "test.jsonl", test);
    bench::write_file_atomic(dir / "metrics.jsonl", metrics::report_to_json(sample_report("70/30")) + "\n");
    ServiceConfig cfg = fast_config();
    cfg.checkpoint = dir / "model.ckpt";
    cfg.manifests = {{"test", dir / "test.jsonl"}};
    cfg.metrics = dir / "metrics.jsonl";
    Inspector ins(cfg);
    EXPECT_EQ(ins.health()["functions"], 16);
    EXPECT_EQ(ins.metrics("70_30")["split"], "70/30");
    // Same model, same bytes.
    EXPECT_EQ(ins.explanation("fn-100", "Original"), make().explanation("fn-100", "Original"));

    ServiceConfig bad;
    bad.port = -1;
    try {
        bad.validate();
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("checkpoint"), std::string::npos);
        EXPECT_NE(msg.find("manifest"), std::string::npos);
        EXPECT_NE(msg.find("port"), std::string::npos);
    }
    std::filesystem::remove_all(dir);
}
