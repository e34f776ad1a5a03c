#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "effgcn/train.hpp"
#include "oracles.hpp"

using namespace effgcn;
namespace fs = std::filesystem;

namespace {

SkeletonGraph path7() {
    SkeletonGraph g;
    g.num_joints = 7;
    g.center = 0;
    g.parents = {0, 0, 1, 2, 3, 4, 5};
    for (int i = 1; i < 7; ++i) g.edges.emplace_back(i, i - 1);
    return g;
}

ArchPlan micro_plan(int classes) {
    ScalingConfig cfg;
    ArchPlan plan = make_arch(cfg);
    plan.stage_channels = {16, 16, 16, 16};
    plan.stage_depths = {0, 0, 1, 1};
    plan.init_channels = 16;
    plan.num_classes = classes;
    return plan;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("softmax sums to one and ignores constant shifts") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> z(6);
        for (auto& v : z) v = 10.0 * rng.normal();
        const auto p = softmax<double>(z);
        double total = 0;
        for (double v : p) total += v;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        auto shifted = z;
        for (auto& v : shifted) v += 123.5;
        const auto q = softmax<double>(shifted);
        for (std::size_t i = 0; i < p.size(); ++i)
            CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-12));
    }
}

TEST_CASE("cross entropy: confident, uniform and invalid targets") {
    const std::vector<double> confident{20.0, 0.0, 0.0, 0.0};
    CHECK(softmax_cross_entropy<double>(confident, 0).first < 1e-8);
    const std::vector<double> uniform{1.0, 1.0, 1.0, 1.0};
    CHECK(softmax_cross_entropy<double>(uniform, 2).first ==
          doctest::Approx(std::log(4.0)).epsilon(1e-9));
    CHECK_THROWS_AS(softmax_cross_entropy<double>(uniform, 4), std::invalid_argument);

    // gradient is softmax minus the one-hot target
    Rng rng(2);
    std::vector<double> z(5);
    for (auto& v : z) v = rng.normal();
    const auto [loss, grad] = softmax_cross_entropy<double>(z, 3);
    const auto p = softmax<double>(z);
    for (int i = 0; i < 5; ++i)
        CHECK(grad[static_cast<std::size_t>(i)] ==
              doctest::Approx(p[static_cast<std::size_t>(i)] - (i == 3 ? 1.0 : 0.0))
                  .epsilon(1e-12));
}

TEST_CASE("learning-rate schedule endpoints and midpoint") {
    TrainConfig cfg;  // 70 epochs, 10 warmup, base 0.1
    CHECK(lr_at_epoch(0, cfg) == 0.0);
    CHECK(lr_at_epoch(10, cfg) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(lr_at_epoch(40, cfg) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(lr_at_epoch(69, cfg) ==
          doctest::Approx(0.1 * 0.5 * (1.0 + std::cos(59.0 * std::numbers::pi / 60.0)))
              .epsilon(1e-12));
    CHECK(lr_at_epoch(69, cfg) == doctest::Approx(0.000137).epsilon(0.01));
    CHECK_THROWS_AS(lr_at_epoch(70, cfg), std::invalid_argument);
    CHECK_THROWS_AS(lr_at_epoch(-1, cfg), std::invalid_argument);
}

TEST_CASE("plain gradient descent as the momentum-free special case") {
    double p = 1.0, g = 0.5, v = 0.0;
    sgd_nesterov_update(&p, &g, &v, 1, 0.1, 0.0, 0.0);
    CHECK(p == doctest::Approx(0.95).epsilon(1e-12));

    double p2 = 3.0, g2 = 0.0, v2 = 0.0;
    sgd_nesterov_update(&p2, &g2, &v2, 1, 0.1, 0.9, 0.0);
    CHECK(p2 == 3.0);  // zero grad, zero velocity: unchanged
}

TEST_CASE("two Nesterov steps match the hand-executed recurrence") {
    double p = 1.0, v = 0.0;
    double g = 0.5;
    sgd_nesterov_update(&p, &g, &v, 1, 0.1, 0.9, 0.0);
    CHECK(p == doctest::Approx(0.905).epsilon(1e-15));
    CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
    sgd_nesterov_update(&p, &g, &v, 1, 0.1, 0.9, 0.0);
    CHECK(v == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(p == doctest::Approx(0.7695).epsilon(1e-15));
}

TEST_CASE("weight decay targets weights but not norms, biases or edge masks") {
    const auto graph = path7();
    Network<float> net(micro_plan(3), graph, Attention::st_joint, 3, 12, 0);
    int weights = 0, excluded = 0;
    for (const auto& p : net.registry().parameters()) {
        const bool is_weight = p.name.size() >= 7 &&
                               p.name.compare(p.name.size() - 7, 7, ".weight") == 0;
        if (is_weight) {
            CHECK(p.decay);
            ++weights;
        } else {
            CHECK(!p.decay);  // gamma, beta, bias, edge masks
            ++excluded;
        }
    }
    CHECK(weights > 0);
    CHECK(excluded > 0);

    // decay moves a flagged weight even with zero gradient, and spares an
    // excluded one
    double w = 2.0, g = 0.0, v = 0.0;
    sgd_nesterov_update(&w, &g, &v, 1, 0.1, 0.0, 0.5);
    CHECK(w == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("synthetic classes are far apart relative to their spread") {
    const int classes = 4, per = 12, frames = 24, joints = 10;
    const auto data = synth_dataset(classes, per, frames, joints, 0);
    REQUIRE(data.size() == static_cast<std::size_t>(classes * per));

    // class-conditional means and within-class scatter
    const std::size_t dim = static_cast<std::size_t>(3 * frames * joints);
    std::vector<std::vector<double>> means(static_cast<std::size_t>(classes),
                                           std::vector<double>(dim, 0.0));
    std::vector<int> counts(static_cast<std::size_t>(classes), 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int k = *data.items[i].label;
        ++counts[static_cast<std::size_t>(k)];
        for (std::size_t j = 0; j < dim; ++j)
            means[static_cast<std::size_t>(k)][j] += data.items[i].coords.data[j];
    }
    for (int k = 0; k < classes; ++k) {
        CHECK(counts[static_cast<std::size_t>(k)] == per);  // uniform labels
        for (auto& v : means[static_cast<std::size_t>(k)]) v /= per;
    }
    double within = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& mean = means[static_cast<std::size_t>(*data.items[i].label)];
        double d2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = data.items[i].coords.data[j] - mean[j];
            d2 += d * d;
        }
        within += d2;
    }
    within = std::sqrt(within / static_cast<double>(data.size()));
    double min_between = 1e300;
    for (int a = 0; a < classes; ++a) {
        for (int b = a + 1; b < classes; ++b) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double d = means[static_cast<std::size_t>(a)][j] -
                                 means[static_cast<std::size_t>(b)][j];
                d2 += d * d;
            }
            min_between = std::min(min_between, std::sqrt(d2));
        }
    }
    CHECK(min_between > 5.0 * within);
}

TEST_CASE("identical seeds give identical dataset bytes, different seeds differ") {
    const auto dir_a = fs::temp_directory_path() / "effgcn_synth_a";
    const auto dir_b = fs::temp_directory_path() / "effgcn_synth_b";
    save_dataset_dir(synth_dataset(3, 2, 10, 5, 42), dir_a.string());
    save_dataset_dir(synth_dataset(3, 2, 10, 5, 42), dir_b.string());
    for (const auto& entry : fs::directory_iterator(dir_a)) {
        const auto other = dir_b / entry.path().filename();
        CHECK(slurp(entry.path().string()) == slurp(other.string()));
    }
    const auto changed = synth_dataset(3, 2, 10, 5, 43);
    const auto original = synth_dataset(3, 2, 10, 5, 42);
    CHECK(changed.items[0].coords.data != original.items[0].coords.data);
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    CHECK_THROWS_AS(synth_dataset(1, 2, 10, 5, 0), std::invalid_argument);
}

TEST_CASE("evaluation metrics: rigged predictors and the trace identity") {
    const auto graph = path7();
    const int classes = 3;
    auto data = synth_dataset(classes, 4, 12, 7, 1);
    Network<float> net(micro_plan(classes), graph, Attention::st_joint, 3, 12, 0);

    // constant predictor: zero everything, then bias class 1
    for (const auto& p : net.registry().parameters())
        std::fill(p.tensor.value().data.begin(), p.tensor.value().data.end(), 0.0f);
    for (const auto& p : net.registry().parameters())
        if (p.name == "classifier.fc.bias") p.tensor.value().data[1] = 5.0f;
    const auto constant = evaluate(net, data, graph);
    for (int r = 0; r < classes; ++r)
        for (int c = 0; c < classes; ++c)
            if (c != 1)
                CHECK(constant.confusion.data[static_cast<std::size_t>(r * classes + c)] == 0);
    CHECK(constant.top1_accuracy == doctest::Approx(1.0 / classes));

    // perfect predictor on a single-class set: diagonal confusion, accuracy 1
    Dataset ones;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (*data.items[i].label == 1) {
            ones.ids.push_back(data.ids[i]);
            ones.items.push_back(data.items[i]);
        }
    }
    const auto perfect = evaluate(net, ones, graph);
    CHECK(perfect.top1_accuracy == 1.0);
    std::int64_t off_diagonal = 0, trace = 0, total = 0;
    for (int r = 0; r < classes; ++r)
        for (int c = 0; c < classes; ++c) {
            const auto v = perfect.confusion.data[static_cast<std::size_t>(r * classes + c)];
            total += v;
            if (r == c)
                trace += v;
            else
                off_diagonal += v;
        }
    CHECK(off_diagonal == 0);
    CHECK(perfect.top1_accuracy == doctest::Approx(static_cast<double>(trace) /
                                                   static_cast<double>(total)));

    // labels outside the class range are data errors
    auto bad = data;
    bad.items[0].label = classes + 5;
    CHECK_THROWS_AS(evaluate(net, bad, graph), DataError);
}

TEST_CASE("activation maps: zero head, shape and peak normalization") {
    const auto graph = path7();
    Network<float> net(micro_plan(3), graph, Attention::st_joint, 3, 12, 7);
    const auto data = synth_dataset(3, 1, 12, 7, 2);

    // zero classifier weights give the all-zero map
    for (const auto& p : net.registry().parameters())
        if (p.name == "classifier.fc.weight")
            std::fill(p.tensor.value().data.begin(), p.tensor.value().data.end(), 0.0f);
    const auto zero_map = class_activation_map(net, data.items[0], graph, 1);
    CHECK(zero_map.shape == Shape({3, 7}));  // two stride-2 stages: 12 -> 6 -> 3
    for (float v : zero_map.data) CHECK(v == 0.0f);

    // restore random weights: the map normalizes to a peak of exactly one
    Network<float> fresh(micro_plan(3), graph, Attention::st_joint, 3, 12, 8);
    const auto map = class_activation_map(fresh, data.items[0], graph, 0);
    float peak = 0;
    for (float v : map.data) {
        CHECK(v >= 0.0f);
        peak = std::max(peak, v);
    }
    CHECK(peak == 1.0f);
    CHECK_THROWS_AS(class_activation_map(fresh, data.items[0], graph, 99),
                    std::invalid_argument);
}

TEST_CASE("micro training run: learning signal, exact lr trace, bitwise repeatability") {
    const auto graph = path7();
    const auto train_set = synth_dataset(2, 6, 12, 7, 3);
    const auto eval_set = synth_dataset(2, 3, 12, 7, 4);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.warmup_epochs = 1;
    cfg.batch_size = 4;
    cfg.seed = 9;

    const auto out_a = fs::temp_directory_path() / "effgcn_train_a";
    const auto out_b = fs::temp_directory_path() / "effgcn_train_b";
    Network<float> net_a(micro_plan(2), graph, Attention::st_joint, 3, 12, cfg.seed);
    const auto result_a = train(net_a, train_set, &eval_set, graph, cfg, out_a.string());

    REQUIRE(result_a.log.size() == 4);
    for (int e = 0; e < 4; ++e)
        CHECK(result_a.log[static_cast<std::size_t>(e)].lr == lr_at_epoch(e, cfg));
    CHECK(result_a.log.back().train_loss < result_a.log.front().train_loss);

    Network<float> net_b(micro_plan(2), graph, Attention::st_joint, 3, 12, cfg.seed);
    const auto result_b = train(net_b, train_set, &eval_set, graph, cfg, out_b.string());
    CHECK(slurp(result_a.checkpoint_path) == slurp(result_b.checkpoint_path));
    CHECK(slurp(result_a.log_path) == slurp(result_b.log_path));

    // the CSV carries the documented header
    CHECK(slurp(result_a.log_path).rfind("epoch,lr,train_loss,train_acc,eval_acc", 0) == 0);

    fs::remove_all(out_a);
    fs::remove_all(out_b);

    Dataset empty;
    Network<float> net_c(micro_plan(2), graph, Attention::st_joint, 3, 12, 0);
    CHECK_THROWS_AS(train(net_c, empty, nullptr, graph, cfg, out_a.string()),
                    std::invalid_argument);
}

TEST_CASE("an exploding configuration aborts with a diagnostic") {
    const auto graph = path7();
    const auto train_set = synth_dataset(2, 4, 12, 7, 5);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.warmup_epochs = 1;
    cfg.batch_size = 4;
    cfg.base_lr = 1e30;
    Network<float> net(micro_plan(2), graph, Attention::st_joint, 3, 12, 0);
    const auto out = fs::temp_directory_path() / "effgcn_train_explode";
    try {
        train(net, train_set, nullptr, graph, cfg, out.string());
        FAIL("expected divergence");
    } catch (const StateError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("epoch") != std::string::npos);
        CHECK(msg.find("batch") != std::string::npos);
        CHECK(msg.find("lr") != std::string::npos);
    }
    fs::remove_all(out);
}
