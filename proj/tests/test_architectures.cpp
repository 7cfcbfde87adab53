#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "binembed/architectures.hpp"
#include "binembed/model_io.hpp"
#include "support/helpers.hpp"

using namespace binembed;

namespace {

// Independent closed-form recount from the layer specs alone.
int64_t recount_params(const LayerGraph& g) {
    int64_t total = 0;
    for (const auto& l : g.layers) {
        if (l.kind == LayerKind::conv || l.kind == LayerKind::binary_conv) {
            total += int64_t(l.conv.kernel_h) * l.conv.kernel_w * l.conv.in_ch * l.conv.out_ch;
            total += static_cast<int64_t>(l.bias.size());
        }
        if (l.kind == LayerKind::batch_norm) total += 4ll * l.bn.channels();
    }
    return total;
}

FloatTensor zero_input() { return FloatTensor({98, 64, 1}); }

}  // namespace

TEST_CASE("densenet28 embedding dim and parameter budget") {
    LayerGraph g = build_densenet28();
    CHECK(g.embedding_dim() == 576);
    const ParamCounts c = parameter_count(g);
    CHECK(c.total >= 4'275'000);
    CHECK(c.total <= 4'725'000);
    CHECK(c.total == recount_params(g));
    CHECK(c.binary + c.floating == c.total);
}

TEST_CASE("meliusnet22 embedding dim and parameter budget") {
    LayerGraph g = build_meliusnet22();
    CHECK(g.embedding_dim() == 512);
    const ParamCounts c = parameter_count(g);
    CHECK(c.total >= 6'080'000);
    CHECK(c.total <= 6'720'000);
    CHECK(c.total == recount_params(g));
}

TEST_CASE("tiny tap parameter budget and size") {
    LayerGraph tiny = build_tiny();
    CHECK(tiny.tiny_tap == "batch-normalization-12");
    const ParamCounts c = parameter_count(tiny);
    CHECK(c.total >= 1'260'000);
    CHECK(c.total <= 1'540'000);
    const SizeReport r = size_report(tiny);
    CHECK(r.quantized_weights_mb >= 0.65 * 0.9);
    CHECK(r.quantized_weights_mb <= 0.65 * 1.1);
}

TEST_CASE("layer names are unique and topologically ordered") {
    for (const auto* arch : {"densenet28", "meliusnet22"}) {
        LayerGraph g = build_by_name(arch);
        std::set<std::string> names;
        for (size_t i = 0; i < g.layers.size(); ++i) {
            CHECK(names.insert(g.layers[i].name).second);
            for (int in : g.layers[i].inputs) CHECK(in < static_cast<int>(i));
        }
    }
}

TEST_CASE("densenet28 exposes batch-normalization-12 and transition names") {
    LayerGraph g = build_densenet28();
    CHECK(g.find("batch-normalization-12") >= 0);
    CHECK(g.find("section-1-transition-pw") >= 0);
    CHECK(g.find("section-2-transition-pw") >= 0);
    CHECK(g.find("section-3-transition-pw") >= 0);
}

TEST_CASE("forward of all-zero input is deterministic across calls") {
    LayerGraph g = build_densenet28();
    const FloatTensor a = graph_forward(g, zero_input(), BnMode::infer);
    const FloatTensor b = graph_forward(g, zero_input(), BnMode::infer);
    CHECK(a.numel() == 576);
    CHECK(a.data == b.data);
}

TEST_CASE("meliusnet forward emits 512-d embedding") {
    LayerGraph g = build_meliusnet22();
    const FloatTensor e = graph_forward(g, zero_input(), BnMode::infer);
    CHECK(e.numel() == 512);
}

TEST_CASE("improvement block output shape equals its input shape") {
    LayerGraph g = build_meliusnet22();
    for (const auto& l : g.layers) {
        if (l.kind == LayerKind::tail_add)
            CHECK(l.out_shape == g.layers[l.inputs[0]].out_shape);
    }
}

TEST_CASE("batch of two identical inputs produces identical rows") {
    LayerGraph g = build_tiny();
    Rng rng(17);
    FloatTensor one = test_support::random_tensor({98, 64, 1}, rng);
    FloatTensor two({2, 98, 64, 1});
    std::copy(one.data.begin(), one.data.end(), two.ptr());
    std::copy(one.data.begin(), one.data.end(), two.ptr() + one.numel());
    const FloatTensor emb = graph_forward(g, two, BnMode::infer);
    const int64_t d = g.embedding_dim();
    for (int64_t k = 0; k < d; ++k) CHECK(emb.data[k] == emb.data[d + k]);
}

TEST_CASE("tiny with tap at the final layer reproduces the full embedding") {
    LayerGraph full = build_densenet28();
    // the last layer itself (global max pool)
    LayerGraph same = truncate_at_tap(full, full.layers.back().name);
    // the last pre-pool layer plus a fresh pool
    LayerGraph pre = truncate_at_tap(full, full.layers[full.layers.size() - 2].name);
    Rng rng(4);
    const FloatTensor x = test_support::random_tensor({98, 64, 1}, rng);
    const FloatTensor a = graph_forward(full, x, BnMode::infer);
    const FloatTensor b = graph_forward(same, x, BnMode::infer);
    const FloatTensor c = graph_forward(pre, x, BnMode::infer);
    CHECK(a.data == b.data);
    CHECK(a.data == c.data);
}

TEST_CASE("tapped forward of the full graph matches the truncated graph") {
    LayerGraph full = build_densenet28();
    LayerGraph tiny = build_tiny();
    Rng rng(9);
    const FloatTensor x = test_support::random_tensor({98, 64, 1}, rng);
    const FloatTensor via_tap = graph_forward(full, x, BnMode::infer, nullptr,
                                              "batch-normalization-12");
    const FloatTensor via_tiny = graph_forward(tiny, x, BnMode::infer);
    CHECK(via_tap.data == via_tiny.data);
}

TEST_CASE("unknown tap raises a lookup error") {
    CHECK_THROWS_AS(build_tiny("no-such-layer"), std::out_of_range);
    LayerGraph g = build_tiny();
    CHECK_THROWS_AS(graph_forward(g, zero_input(), BnMode::infer, nullptr, "nope"),
                    std::out_of_range);
}

TEST_CASE("binary weights round-trip through pack/unpack unchanged") {
    LayerGraph g = build_tiny();
    initialize_weights(g, 123);
    for (auto& l : g.layers) {
        if (l.kind != LayerKind::binary_conv) continue;
        const BitTensor before = l.packed;
        FloatTensor u = unpack(before);
        BitTensor again = pack(u);
        CHECK(again == before);
    }
}
