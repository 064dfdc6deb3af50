#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "archdiff/errors.hpp"
#include "archdiff/scorenet.hpp"
#include "fd_check.hpp"

using namespace archdiff;

namespace {

ScoreNetConfig tiny_cfg() {
    ScoreNetConfig cfg = ScoreNetConfig::desk();
    cfg.num_blocks = 1;
    cfg.num_heads = 2;
    cfg.model_dim = 16;
    cfg.ffn_dim = 24;
    cfg.dropout = 0.0;
    return cfg;
}

ContinuousArchitecture random_state(const SpacePtr& space, Rng& rng, double scale = 1.0) {
    ContinuousArchitecture a;
    a.space = space;
    a.t = 0.5;
    a.v = Tensor(space->num_nodes, space->num_ops());
    a.e = Tensor(space->num_nodes, space->num_nodes);
    for (double& v : a.v.data) v = scale * rng.normal();
    for (int i = 0; i < a.e.rows; ++i)
        for (int j = i + 1; j < a.e.cols; ++j) a.e.at(i, j) = scale * rng.normal();
    return a;
}

}  // namespace

TEST_CASE("build_mask follows the adjacency rule") {
    SUBCASE("identity adjacency keeps only self-attention") {
        auto m = build_mask(Tensor::identity(4));
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) CHECK(m.at(i, j) == (i == j ? 0.0 : -1e9));
    }
    SUBCASE("full upper triangle gives a causal-style mask") {
        Tensor e(4, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) e.at(i, j) = 1.0;
        auto m = build_mask(e);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) CHECK(m.at(i, j) == (j >= i ? 0.0 : -1e9));
    }
    SUBCASE("single edge") {
        Tensor e(6, 6);
        e.at(2, 5) = 1.0;
        CHECK(build_mask(e).at(2, 5) == 0.0);
        CHECK(build_mask(e).at(2, 4) == -1e9);
    }
}

TEST_CASE("embedding separates positions and times") {
    auto space = make_space("tiny5");
    ScoreNet net(space, tiny_cfg(), VeSdeConfig{}, Rng(1, 0));

    Tensor v(5, 7);
    v.at(1, 2) = 1.0;
    v.at(2, 2) = 1.0;  // same op at two positions

    Tape tape;
    auto h = net.embed(tape, make_leaf(v, false), 0.3);
    bool rows_differ = false;
    for (int k = 0; k < h->value.cols; ++k) {
        rows_differ = rows_differ || h->value.at(1, k) != h->value.at(2, k);
    }
    CHECK(rows_differ);

    Tape tape2;
    auto h2 = net.embed(tape2, make_leaf(v, false), 0.7);
    bool t_differ = false;
    for (std::size_t i = 0; i < h->value.numel(); ++i) {
        t_differ = t_differ || h->value.data[i] != h2->value.data[i];
    }
    CHECK(t_differ);

    // zeroing the positional table collapses same-op nodes
    ScoreNetConfig ablated = tiny_cfg();
    ablated.use_pos_emb = false;
    ScoreNet net2(space, ablated, VeSdeConfig{}, Rng(1, 0));
    Tape tape3;
    auto h3 = net2.embed(tape3, make_leaf(v, false), 0.3);
    for (int k = 0; k < h3->value.cols; ++k) {
        CHECK(h3->value.at(1, k) == h3->value.at(2, k));
    }
}

TEST_CASE("single-block mask locality") {
    auto space = make_space("tiny5");
    ScoreNet net(space, tiny_cfg(), VeSdeConfig{}, Rng(2, 0));
    const Tensor mask = build_mask(*space->adjacency_template);

    Rng rng(3, 0);
    int probes = 0;
    while (probes < 100) {
        auto state = random_state(space, rng, 2.0);
        const int i = rng.uniform_int(5);
        // pick a node j masked out from i's row (mask -1e9, j != i)
        std::vector<int> blocked;
        for (int j = 0; j < 5; ++j)
            if (j != i && mask.at(i, j) == -1e9) blocked.push_back(j);
        if (blocked.empty()) continue;
        const int j = blocked[rng.uniform_int(static_cast<int>(blocked.size()))];

        auto [v_before, e_before] = net.score(state, 0.4, mask);
        auto perturbed = state;
        for (int k = 0; k < 7; ++k) perturbed.v.at(j, k) += rng.normal();
        auto [v_after, e_after] = net.score(perturbed, 0.4, mask);

        for (int k = 0; k < 7; ++k) {
            CHECK(std::fabs(v_after.at(i, k) - v_before.at(i, k)) <= 1e-9);
        }
        ++probes;
    }
}

TEST_CASE("forward output shapes match the state") {
    auto space = make_space("nb201");
    ScoreNet net(space, tiny_cfg(), VeSdeConfig{}, Rng(4, 0));
    Rng rng(5, 0);
    auto state = random_state(space, rng);
    auto [sv, se] = net.score(state, 0.9, net.sampling_mask(state));
    CHECK(sv.rows == 8);
    CHECK(sv.cols == 7);
    CHECK(se.rows == 8);
    CHECK(se.cols == 8);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j <= i; ++j) CHECK(se.at(i, j) == 0.0);
}

TEST_CASE("forward is pure in eval mode") {
    auto space = make_space("tiny5");
    ScoreNet net(space, tiny_cfg(), VeSdeConfig{}, Rng(6, 0));
    Rng rng(7, 0);
    auto state = random_state(space, rng);
    const Tensor mask = net.sampling_mask(state);
    auto [v1, e1] = net.score(state, 0.25, mask);
    auto [v2, e2] = net.score(state, 0.25, mask);
    CHECK(v1.data == v2.data);
    CHECK(e1.data == e2.data);
}

TEST_CASE("score gradient wrt the input state matches finite differences") {
    auto space = make_space("tiny5");
    ScoreNet net(space, tiny_cfg(), VeSdeConfig{}, Rng(8, 0));
    const Tensor mask = build_mask(*space->adjacency_template);
    Rng rng(9, 0);
    auto state = random_state(space, rng);

    auto res = fd::check_grad(
        [&](Tape& tape, const VarPtr& v_in) {
            auto e_in = make_leaf(state.e, false);
            auto s = net.forward(tape, v_in, e_in, 0.35, mask);
            return tape.mean_all(tape.mul(s.v, s.v));
        },
        state.v);
    CHECK_MESSAGE(res.ok, res.detail);

    auto res_e = fd::check_grad(
        [&](Tape& tape, const VarPtr& e_in) {
            auto v_in = make_leaf(state.v, false);
            auto s = net.forward(tape, v_in, e_in, 0.35, mask);
            return tape.mean_all(tape.mul(s.e, s.e));
        },
        state.e);
    CHECK_MESSAGE(res_e.ok, res_e.detail);
}

TEST_CASE("parameter gradients match finite differences") {
    auto space = make_space("tiny5");
    ScoreNet net(space, tiny_cfg(), VeSdeConfig{}, Rng(10, 0));
    const Tensor mask = build_mask(*space->adjacency_template);
    Rng rng(11, 0);
    auto state = random_state(space, rng);

    for (const std::string name : {"pos", "blk0.h0.wq", "blk0.ffn_w1", "vhead.w2", "ehead.u"}) {
        const Tensor w0 = net.params().at(name)->value;
        auto res = fd::check_grad(
            [&](Tape& tape, const VarPtr& w) {
                // rebind the probed parameter, leaving the rest frozen
                ParamMap probe = net.params().clone(false);
                probe.entries[name] = w;
                ScoreNet local(space, net.config(), net.sde(), std::move(probe));
                auto v_in = make_leaf(state.v, false);
                auto e_in = make_leaf(state.e, false);
                auto s = local.forward(tape, v_in, e_in, 0.6, mask);
                return tape.add(tape.mean_all(tape.mul(s.v, s.v)),
                                tape.mean_all(tape.mul(s.e, s.e)));
            },
            w0);
        CHECK_MESSAGE(res.ok, name, ": ", res.detail);
    }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    auto space = make_space("tiny5");
    ScoreNet net(space, tiny_cfg(), VeSdeConfig{}, Rng(12, 0));
    const std::string path = "/tmp/archdiff_scorenet_test.ckpt";
    net.save(path);
    ScoreNet loaded = ScoreNet::load(path);
    CHECK(loaded.params().count() == net.params().count());
    for (const auto& [name, var] : net.params().entries) {
        CHECK(loaded.params().at(name)->value.data == var->value.data);
    }
    CHECK(loaded.config().num_blocks == net.config().num_blocks);
    std::remove(path.c_str());
}

TEST_CASE("short training run decreases the loss deterministically") {
    auto space = make_space("tiny5");
    auto dataset = enumerate_space(space);
    ScoreNetConfig cfg = tiny_cfg();
    cfg.train_steps = 220;
    cfg.batch_size = 16;
    cfg.warmup = 40;

    auto run1 = train_scorenet(space, dataset, cfg, VeSdeConfig{}, Rng(77, 0));
    auto run2 = train_scorenet(space, dataset, cfg, VeSdeConfig{}, Rng(77, 0));
    CHECK(run1.loss_curve == run2.loss_curve);

    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 50; ++i) head += run1.loss_curve[i];
    for (int i = 0; i < 50; ++i) tail += run1.loss_curve[cfg.train_steps - 50 + i];
    CHECK(tail < head);

    CHECK_THROWS_AS(train_scorenet(space, {}, cfg, VeSdeConfig{}, Rng(1, 0)), UsageError);
}

