#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <set>

#include "dance/baselines.hpp"
#include "dance/trainer.hpp"
#include "testutil.hpp"

using namespace dance;
using namespace dance::test;

namespace {

struct Toy {
    LabeledSet source;
    LabeledSet target;
    ModelConfig mcfg;
    ShiftScenario scenario;
};

Toy toy_problem(Regime regime = Regime::CDA, std::size_t n_per_class = 12) {
    Toy t;
    t.scenario = regime == Regime::CDA ? make_scenario(regime, 4, 4, 0, 0, 77)
                                       : make_scenario(regime, 6, 4, 0, 2, 77);
    SynthConfig synth;
    synth.input_dim = 6;
    synth.cluster_sigma = 0.1;
    synth.lift_noise_sigma = 0.05;
    DomainTransform shift = make_shift_transform(t.scenario, synth, 0.2, 0.2, 1.0, 0.05);
    t.source = generate_domain(t.scenario, synth, Domain::Source, n_per_class,
                               DomainTransform::identity(), 77);
    t.target = generate_domain(t.scenario, synth, Domain::Target, n_per_class, shift, 77);
    t.mcfg.input_dim = 6;
    t.mcfg.hidden_dims = {12};
    t.mcfg.feat_dim = 8;
    t.mcfg.num_classes = t.scenario.num_source_classes();
    t.mcfg.tau_cls = 0.1;
    t.mcfg.tau_nc = 0.05;
    t.mcfg.seed = 5;
    return t;
}

TrainConfig fast_config(std::size_t iters = 60) {
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.total_iters = iters;
    cfg.seed = 3;
    return cfg;
}

bool models_equal(const Model& a, const Model& b) {
    if (!(a.head_w == b.head_w) || !(a.head_b == b.head_b) || !(a.prototypes == b.prototypes)) {
        return false;
    }
    for (std::size_t l = 0; l < a.hidden.size(); ++l) {
        if (!(a.hidden[l].w == b.hidden[l].w) || !(a.hidden[l].b == b.hidden[l].b)) return false;
        if (!(a.hidden[l].bn_source.gamma == b.hidden[l].bn_source.gamma)) return false;
        if (!(a.hidden[l].bn_target.gamma == b.hidden[l].bn_target.gamma)) return false;
        if (!(a.hidden[l].bn_source.beta == b.hidden[l].bn_source.beta)) return false;
        if (!(a.hidden[l].bn_target.beta == b.hidden[l].bn_target.beta)) return false;
    }
    return true;
}

} // namespace

TEST_CASE("BatchSampler covers each epoch without duplicates") {
    BatchSampler sampler(10, 4, 99);
    std::set<std::size_t> seen;
    // 2 batches per epoch (last 2 of 10 dropped), so 4 batches span 2 epochs
    for (int b = 0; b < 2; ++b) {
        auto idx = sampler.next();
        CHECK(idx.size() == 4);
        for (auto i : idx) {
            CHECK(i < 10);
            CHECK(seen.insert(i).second); // no duplicate within an epoch
        }
    }
    // a batch larger than the dataset clamps to the dataset
    BatchSampler small(3, 8, 1);
    CHECK(small.next().size() == 3);
}

TEST_CASE("train_dance is deterministic and logs finite composed losses") {
    Toy toy = toy_problem();
    TrainConfig cfg = fast_config();
    cfg.debug_checks = true;
    TrainResult a = train_dance(toy.source, toy.target, toy.mcfg, cfg);
    TrainResult b = train_dance(toy.source, toy.target, toy.mcfg, cfg);
    CHECK(models_equal(a.model, b.model));
    REQUIRE(a.log.size() == cfg.total_iters);
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].iter == b.log[i].iter);
        CHECK(a.log[i].total == b.log[i].total);
        CHECK(std::isfinite(a.log[i].total));
        // breakdown invariant: total = cls + lambda (nc + es)
        const double recomposed =
            a.log[i].cls + cfg.lambda * (a.log[i].nc + a.log[i].es);
        CHECK(std::fabs(recomposed - a.log[i].total) <= 1e-12);
        CHECK(a.log[i].es <= 0.0);
    }
}

TEST_CASE("lambda zero reproduces the source-only trajectory bit for bit") {
    Toy toy = toy_problem();
    TrainConfig cfg = fast_config();
    cfg.lambda = 0.0;
    TrainResult dance = train_dance(toy.source, toy.target, toy.mcfg, cfg);
    TrainResult so = train_source_only(toy.source, toy.mcfg, cfg);
    // trainable parameters identical; target BN running stats legitimately differ
    CHECK(dance.model.head_w == so.model.head_w);
    CHECK(dance.model.head_b == so.model.head_b);
    CHECK(dance.model.prototypes == so.model.prototypes);
    for (std::size_t l = 0; l < dance.model.hidden.size(); ++l) {
        CHECK(dance.model.hidden[l].w == so.model.hidden[l].w);
        CHECK(dance.model.hidden[l].b == so.model.hidden[l].b);
        CHECK(dance.model.hidden[l].bn_source.gamma == so.model.hidden[l].bn_source.gamma);
        CHECK(dance.model.hidden[l].bn_source.running_mean ==
              so.model.hidden[l].bn_source.running_mean);
        CHECK(dance.model.hidden[l].bn_target.gamma == so.model.hidden[l].bn_target.gamma);
    }
    for (std::size_t i = 0; i < dance.log.size(); ++i) {
        CHECK(dance.log[i].cls == so.log[i].cls);
    }
}

TEST_CASE("source iterations leave target BN untouched across a real run") {
    Toy toy = toy_problem();
    TrainConfig cfg = fast_config(40);
    // source-only training must never move target BN state off its init
    TrainResult so = train_source_only(toy.source, toy.mcfg, cfg);
    Model fresh = init_model(toy.mcfg);
    for (std::size_t l = 0; l < so.model.hidden.size(); ++l) {
        CHECK(so.model.hidden[l].bn_target.running_mean ==
              fresh.hidden[l].bn_target.running_mean);
        CHECK(so.model.hidden[l].bn_target.running_var ==
              fresh.hidden[l].bn_target.running_var);
    }
    // dance training moves both domains' stats (distinct data)
    TrainResult dance = train_dance(toy.source, toy.target, toy.mcfg, cfg);
    CHECK_FALSE(dance.model.hidden[0].bn_target.running_mean ==
                fresh.hidden[0].bn_target.running_mean);
    CHECK_FALSE(dance.model.hidden[0].bn_source.running_mean ==
                dance.model.hidden[0].bn_target.running_mean);
}

TEST_CASE("memory bank rows match live features after each iteration") {
    // instrumented replay: run a few iterations manually mirroring the trainer
    Toy toy = toy_problem();
    TrainConfig cfg = fast_config(10);
    cfg.validate();
    Model model = init_model(toy.mcfg);
    MemoryBank bank = init_bank(model, toy.target.x);
    BatchSampler tgt(toy.target.x.rows(), cfg.batch_size, derive_seed(cfg.seed, 0x746774ULL));
    for (int iter = 0; iter < 6; ++iter) {
        auto idx = tgt.next();
        Matrix xt = gather_rows(toy.target.x, idx);
        ForwardCache cache;
        forward_features(model, xt, Domain::Target, true, &cache);
        update_bank(bank, idx, cache.f_hat);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t j = 0; j < bank.feat_dim(); ++j) {
                CHECK(bank.v(idx[r], j) == cache.f_hat(r, j));
            }
        }
    }
}

TEST_CASE("no-memory mode and bank-order flag both train to completion") {
    Toy toy = toy_problem();
    TrainConfig cfg = fast_config(30);
    cfg.memory_enabled = false;
    TrainResult nomem = train_dance(toy.source, toy.target, toy.mcfg, cfg);
    CHECK(nomem.log.size() == 30);

    TrainConfig after = fast_config(30);
    after.bank_update_order = BankUpdateOrder::After;
    TrainResult post = train_dance(toy.source, toy.target, toy.mcfg, after);
    CHECK(post.log.size() == 30);

    // the three variants genuinely differ
    TrainResult base = train_dance(toy.source, toy.target, toy.mcfg, fast_config(30));
    CHECK_FALSE(models_equal(nomem.model, base.model));
    CHECK_FALSE(models_equal(post.model, base.model));

    TrainConfig detach = fast_config(30);
    detach.detach_prototypes_in_nc = true;
    TrainResult det = train_dance(toy.source, toy.target, toy.mcfg, detach);
    CHECK_FALSE(models_equal(det.model, base.model));
}

TEST_CASE("a 200-iteration run lowers the source cross-entropy") {
    Toy toy = toy_problem(Regime::CDA, 20);
    TrainConfig cfg = fast_config(200);
    cfg.batch_size = 16;
    TrainResult r = train_dance(toy.source, toy.target, toy.mcfg, cfg);
    // average the first and last 10 logged cls losses
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 10; ++i) {
        head += r.log[static_cast<std::size_t>(i)].cls;
        tail += r.log[r.log.size() - 1 - static_cast<std::size_t>(i)].cls;
    }
    CHECK(tail < head);
}

TEST_CASE("export_features is deterministic with unit rows") {
    Toy toy = toy_problem();
    TrainConfig cfg = fast_config(20);
    TrainResult r = train_dance(toy.source, toy.target, toy.mcfg, cfg);
    Matrix f1 = export_features(r.model, toy.target.x, Domain::Target);
    Matrix f2 = export_features(r.model, toy.target.x, Domain::Target);
    CHECK(f1 == f2);
    for (std::size_t i = 0; i < f1.rows(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < f1.cols(); ++j) sq += f1(i, j) * f1(i, j);
        CHECK(std::fabs(std::sqrt(sq) - 1.0) <= 1e-12);
    }
}

TEST_CASE("train config validation rejects bad settings") {
    Toy toy = toy_problem();
    TrainConfig cfg = fast_config();
    cfg.batch_size = 1;
    CHECK_THROWS_AS(train_dance(toy.source, toy.target, toy.mcfg, cfg), ValueError);
    cfg = fast_config();
    cfg.lambda = -0.5;
    CHECK_THROWS_AS(train_dance(toy.source, toy.target, toy.mcfg, cfg), ValueError);
    cfg = fast_config();
    LabeledSet empty;
    CHECK_THROWS_AS(train_dance(toy.source, empty, toy.mcfg, cfg), ValueError);
    // source labels outside [0, K)
    LabeledSet bad = toy.source;
    bad.y[0] = 99;
    CHECK_THROWS_AS(train_dance(bad, toy.target, toy.mcfg, cfg), ValueError);
}

TEST_CASE("loss log round-trips through its CSV file") {
    Toy toy = toy_problem();
    TrainResult r = train_dance(toy.source, toy.target, toy.mcfg, fast_config(5));
    const std::string path = "test_trainer_log.csv";
    save_loss_log(r.log, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "iter,lr,cls,nc,es,total");
    std::size_t rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 5);
    std::remove(path.c_str());
}
