#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include <pnkit/nn.hpp>
#include <pnkit/rng.hpp>

using namespace pnkit;
using namespace pnkit::nn;

namespace {

Tensor4 random_tensor(Rng& rng, int n, int h, int w, int c, double lo = -1.0, double hi = 1.0) {
    Tensor4 t(n, h, w, c);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Miniature of the published stack for gradient and training tests.
CnnConfig tiny_config(int input = 12) {
    CnnConfig cfg;
    cfg.input_h = cfg.input_w = input;
    return cfg;
}

}  // namespace

// --- conv ---------------------------------------------------------------------

TEST_CASE("conv2d_forward: 1x1 identity kernel copies the input per channel") {
    Rng rng(1);
    const Tensor4 x = random_tensor(rng, 1, 5, 5, 1);
    ConvLayer layer;
    layer.kh = layer.kw = 1;
    layer.in_ch = 1;
    layer.out_ch = 1;
    layer.kernel = {1.0};
    layer.bias = {0.0};
    const Tensor4 y = conv2d_forward(x, layer);
    CHECK(y.data == x.data);
}

TEST_CASE("conv2d_forward: zero kernel and bias give a zero output") {
    Rng rng(2);
    const Tensor4 x = random_tensor(rng, 2, 6, 6, 3);
    ConvLayer layer;
    layer.kh = layer.kw = 3;
    layer.in_ch = 3;
    layer.out_ch = 4;
    layer.kernel.assign(3 * 3 * 3 * 4, 0.0);
    layer.bias.assign(4, 0.0);
    for (double v : conv2d_forward(x, layer).data) CHECK(v == 0.0);
}

TEST_CASE("conv2d_forward: all-ones 3x3 matches a quadruple-loop oracle") {
    Rng rng(3);
    const Tensor4 x = random_tensor(rng, 1, 5, 5, 1);
    ConvLayer layer;
    layer.kh = layer.kw = 3;
    layer.in_ch = 1;
    layer.out_ch = 1;
    layer.kernel.assign(9, 1.0);
    layer.bias = {0.0};
    const Tensor4 y = conv2d_forward(x, layer);
    REQUIRE(y.h == 5);
    REQUIRE(y.w == 5);
    for (int oy = 0; oy < 5; ++oy)
        for (int ox = 0; ox < 5; ++ox) {
            double want = 0.0;  // local 3x3 sum, zero padding
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = oy + dy, xx = ox + dx;
                    if (yy < 0 || xx < 0 || yy >= 5 || xx >= 5) continue;
                    want += x.slice(0, yy, xx)[0];
                }
            CHECK(y.slice(0, oy, ox)[0] == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("conv2d_forward: dilated strided shape chain of the full stack") {
    // 280 -> 280 (conv s1 same) -> 140 (pool s2) -> 47 (conv s3 same).
    CnnConfig cfg;
    const CnnModel model = make_model(cfg, 0);
    CHECK(same_out(280, cfg.conv1_stride) == 280);
    CHECK(same_out(280, cfg.pool_stride) == 140);
    CHECK(same_out(140, cfg.conv2_stride) == 47);
    CHECK(model.fc_input_size() == 47 * 47 * 16);
    CHECK(model.fc.in == 47 * 47 * 16);
}

// --- batch norm ------------------------------------------------------------------

TEST_CASE("batchnorm_forward: standardizes per channel in train mode") {
    Rng rng(4);
    Tensor4 x = random_tensor(rng, 3, 4, 4, 2, -3.0, 5.0);
    BatchNormLayer bn;
    bn.channels = 2;
    bn.gamma = {1.0, 1.0};
    bn.beta = {0.0, 0.0};
    bn.running_mean = {0.0, 0.0};
    bn.running_var = {1.0, 1.0};
    const Tensor4 y = batchnorm_forward(x, bn, BnMode::train);

    const std::size_t pixels = y.size() / 2;
    for (int c = 0; c < 2; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < pixels; ++i) mean += y.data[i * 2 + static_cast<std::size_t>(c)];
        mean /= static_cast<double>(pixels);
        for (std::size_t i = 0; i < pixels; ++i) {
            const double d = y.data[i * 2 + static_cast<std::size_t>(c)] - mean;
            var += d * d;
        }
        var /= static_cast<double>(pixels);
        CHECK(std::abs(mean) < 1e-6);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("batchnorm_forward: gamma/beta shift the standardized output") {
    Rng rng(5);
    Tensor4 x = random_tensor(rng, 4, 3, 3, 1, -1.0, 1.0);
    BatchNormLayer bn;
    bn.channels = 1;
    bn.gamma = {2.0};
    bn.beta = {3.0};
    bn.running_mean = {0.0};
    bn.running_var = {1.0};
    const Tensor4 y = batchnorm_forward(x, bn, BnMode::train);
    const std::size_t n = y.size();
    double mean = 0.0, var = 0.0;
    for (double v : y.data) mean += v;
    mean /= static_cast<double>(n);
    for (double v : y.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    CHECK(mean == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(4.0).epsilon(1e-3));
}

TEST_CASE("batchnorm_forward: infer with running = batch stats reproduces train mode") {
    Rng rng(6);
    Tensor4 x = random_tensor(rng, 2, 4, 4, 3, -2.0, 2.0);
    BatchNormLayer bn;
    bn.channels = 3;
    bn.gamma = {1.3, 0.7, 2.0};
    bn.beta = {0.1, -0.4, 0.0};
    bn.running_mean.assign(3, 0.0);
    bn.running_var.assign(3, 1.0);

    // Compute batch stats directly and store them as running stats.
    const std::size_t pixels = x.size() / 3;
    std::vector<double> mean(3, 0.0), var(3, 0.0);
    for (std::size_t i = 0; i < pixels; ++i)
        for (int c = 0; c < 3; ++c) mean[static_cast<std::size_t>(c)] += x.data[i * 3 + static_cast<std::size_t>(c)];
    for (auto& m : mean) m /= static_cast<double>(pixels);
    for (std::size_t i = 0; i < pixels; ++i)
        for (int c = 0; c < 3; ++c) {
            const double d = x.data[i * 3 + static_cast<std::size_t>(c)] - mean[static_cast<std::size_t>(c)];
            var[static_cast<std::size_t>(c)] += d * d;
        }
    for (auto& v : var) v /= static_cast<double>(pixels);

    BatchNormLayer bn_infer = bn;
    bn_infer.running_mean = mean;
    bn_infer.running_var = var;

    const Tensor4 y_train = batchnorm_forward(x, bn, BnMode::train);
    const Tensor4 y_infer = batchnorm_forward(x, bn_infer, BnMode::infer);
    for (std::size_t i = 0; i < y_train.size(); ++i)
        CHECK(std::abs(y_train.data[i] - y_infer.data[i]) < 1e-9);
}

// --- activations / pooling --------------------------------------------------------

TEST_CASE("clipped_relu clamps both sides") {
    Tensor4 x(1, 1, 3, 1);
    x.data = {-1.0, 0.5, 12.0};
    const Tensor4 y = clipped_relu(x, 10.0);
    CHECK(y.data[0] == 0.0);
    CHECK(y.data[1] == 0.5);
    CHECK(y.data[2] == 10.0);
}

TEST_CASE("maxpool: constant stays constant; random matches a window scan") {
    Tensor4 c(1, 8, 8, 2);
    for (double& v : c.data) v = 0.33;
    PoolSpec pool;
    for (double v : maxpool(c, pool).data) CHECK(v == 0.33);

    Rng rng(7);
    const Tensor4 x = random_tensor(rng, 1, 9, 9, 2);
    const Tensor4 y = maxpool(x, pool);
    REQUIRE(y.h == 5);
    REQUIRE(y.w == 5);
    // 'same' pooling of 9 with k=5 s=2: pad_total = 4*2+5-9 = 4 -> top pad 2.
    for (int oy = 0; oy < 5; ++oy)
        for (int ox = 0; ox < 5; ++ox)
            for (int ch = 0; ch < 2; ++ch) {
                double want = -1e300;
                for (int ky = 0; ky < 5; ++ky)
                    for (int kx = 0; kx < 5; ++kx) {
                        const int iy = oy * 2 - 2 + ky;
                        const int ix = ox * 2 - 2 + kx;
                        if (iy < 0 || ix < 0 || iy >= 9 || ix >= 9) continue;
                        want = std::max(want, x.slice(0, iy, ix)[ch]);
                    }
                CHECK(y.slice(0, oy, ox)[ch] == want);
            }
}

// --- heads ---------------------------------------------------------------------------

TEST_CASE("fc_softmax_forward: symmetry, shift invariance, exact exp values") {
    Tensor4 x(1, 1, 1, 2);
    x.data = {1.0, 1.0};
    FcLayer fc;
    fc.in = 2;
    fc.out = 2;

    fc.weights = {1.0, 1.0, 1.0, 1.0};  // equal logits
    fc.bias = {0.0, 0.0};
    auto probs = fc_softmax_forward(x, fc);
    CHECK(probs[0][0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(probs[0][1] == doctest::Approx(0.5).epsilon(1e-12));

    // logits (0, ln 3) -> (0.25, 0.75)
    fc.weights = {0.0, 0.0, 0.0, 0.0};
    fc.bias = {0.0, std::log(3.0)};
    probs = fc_softmax_forward(x, fc);
    CHECK(probs[0][0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(probs[0][1] == doctest::Approx(0.75).epsilon(1e-12));

    // Shift both logits by a constant: probabilities unchanged, sum still 1.
    fc.bias = {100.0, 100.0 + std::log(3.0)};
    const auto shifted = fc_softmax_forward(x, fc);
    CHECK(shifted[0][0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(shifted[0][0] + shifted[0][1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cross_entropy_loss") {
    CHECK(cross_entropy_loss({1.0, 0.0}, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cross_entropy_loss({0.5, 0.5}, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(cross_entropy_loss({0.25, 0.75}, 1) == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
    // Floor keeps the zero-probability case finite.
    CHECK(std::isfinite(cross_entropy_loss({1.0, 0.0}, 1)));
}

TEST_CASE("sgdm_step: degenerate momentum, stationarity, two-step recurrence") {
    std::vector<double> p{1.0}, v{0.0}, g{0.5};
    sgdm_step(p, v, g, 0.1, 0.0);
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-15));

    p = {2.0};
    v = {0.0};
    g = {0.0};
    sgdm_step(p, v, g, 0.1, 0.9);
    CHECK(p[0] == 2.0);

    // Constant gradient: steps of lr*g then 1.9*lr*g.
    p = {0.0};
    v = {0.0};
    g = {1.0};
    sgdm_step(p, v, g, 0.01, 0.9);
    CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-15));
    sgdm_step(p, v, g, 0.01, 0.9);
    CHECK(p[0] == doctest::Approx(-0.01 - 0.019).epsilon(1e-12));
}

// --- gradients ------------------------------------------------------------------------

namespace {

struct ParamRef {
    const char* name;
    std::vector<double>* param;
    const std::vector<double>* grad;
};

std::vector<ParamRef> param_refs(CnnModel& m, const Gradients& g) {
    return {
        {"conv1.kernel", &m.conv1.kernel, &g.conv1_kernel},
        {"conv1.bias", &m.conv1.bias, &g.conv1_bias},
        {"bn1.gamma", &m.bn1.gamma, &g.bn1_gamma},
        {"bn1.beta", &m.bn1.beta, &g.bn1_beta},
        {"conv2.kernel", &m.conv2.kernel, &g.conv2_kernel},
        {"conv2.bias", &m.conv2.bias, &g.conv2_bias},
        {"bn2.gamma", &m.bn2.gamma, &g.bn2_gamma},
        {"bn2.beta", &m.bn2.beta, &g.bn2_beta},
        {"fc.weights", &m.fc.weights, &g.fc_weights},
        {"fc.bias", &m.fc.bias, &g.fc_bias},
    };
}

}  // namespace

TEST_CASE("backward: analytic gradients match central finite differences") {
    Rng rng(42);
    CnnModel model = make_model(tiny_config(12), 7);
    Tensor4 batch = random_tensor(rng, 2, 12, 12, 3, 0.0, 1.0);
    const std::vector<int> labels{0, 1};

    const Gradients grads = backward(model, batch, labels);
    const double eps = 1e-5;
    double worst = 0.0;
    for (auto& ref : param_refs(model, grads)) {
        REQUIRE(ref.param->size() == ref.grad->size());
        // Probe a deterministic subset of each tensor (all of the small ones).
        const std::size_t n = ref.param->size();
        const std::size_t step = std::max<std::size_t>(1, n / 40);
        for (std::size_t i = 0; i < n; i += step) {
            const double saved = (*ref.param)[i];
            (*ref.param)[i] = saved + eps;
            const double up = training_loss(model, batch, labels);
            (*ref.param)[i] = saved - eps;
            const double down = training_loss(model, batch, labels);
            (*ref.param)[i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double an = (*ref.grad)[i];
            // Central differences bottom out around 1e-11 here (loss roundoff
            // over 2*eps); below that the analytic value is the better zero.
            if (std::abs(fd - an) <= 1e-9) continue;
            const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
            worst = std::max(worst, rel);
            INFO(std::string(ref.name) << "[" << i << "] analytic=" << an << " fd=" << fd);
            CHECK(rel <= 1e-3);
        }
    }
    MESSAGE("worst relative gradient error: " << worst);
}

TEST_CASE("backward: zero-loss batch has zero FC bias gradient") {
    // Saturate the FC so the probabilities are numerically one-hot at the labels.
    Rng rng(8);
    CnnModel model = make_model(tiny_config(12), 3);
    model.fc.weights.assign(model.fc.weights.size(), 0.0);
    model.fc.bias = {60.0, -60.0};  // always predicts class 0 with p ~ 1
    Tensor4 batch = random_tensor(rng, 2, 12, 12, 3, 0.0, 1.0);
    const Gradients g = backward(model, batch, {0, 0});
    CHECK(std::abs(g.fc_bias[0]) < 1e-12);
    CHECK(std::abs(g.fc_bias[1]) < 1e-12);
}

TEST_CASE("backward: duplicating the batch leaves mean gradients unchanged") {
    Rng rng(9);
    CnnModel model = make_model(tiny_config(12), 5);
    Tensor4 batch = random_tensor(rng, 2, 12, 12, 3, 0.0, 1.0);
    Tensor4 doubled(4, 12, 12, 3);
    std::copy(batch.data.begin(), batch.data.end(), doubled.data.begin());
    std::copy(batch.data.begin(), batch.data.end(), doubled.data.begin() + batch.data.size());

    const Gradients g1 = backward(model, batch, {0, 1});
    const Gradients g2 = backward(model, doubled, {0, 1, 0, 1});
    for (std::size_t i = 0; i < g1.conv1_kernel.size(); ++i)
        CHECK(g1.conv1_kernel[i] == doctest::Approx(g2.conv1_kernel[i]).epsilon(1e-9));
    for (std::size_t i = 0; i < g1.fc_bias.size(); ++i)
        CHECK(g1.fc_bias[i] == doctest::Approx(g2.fc_bias[i]).epsilon(1e-9));
}

TEST_CASE("full-batch loss is non-increasing at a small learning rate") {
    Rng rng(10);
    CnnModel model = make_model(tiny_config(12), 11);
    Tensor4 batch = random_tensor(rng, 4, 12, 12, 3, 0.0, 1.0);
    const std::vector<int> labels{0, 1, 1, 0};

    Gradients velocity;
    TrainOptions opt;
    opt.learning_rate = 1e-4;
    opt.momentum = 0.0;
    double prev = training_loss(model, batch, labels);
    for (int step = 0; step < 10; ++step) {
        const Gradients g = backward(model, batch, labels);
        auto refs = param_refs(model, g);
        for (auto& ref : refs) {
            std::vector<double> v(ref.param->size(), 0.0);
            sgdm_step(*ref.param, v, *ref.grad, opt.learning_rate, opt.momentum);
        }
        const double loss = training_loss(model, batch, labels);
        CHECK(loss <= prev + 1e-9);
        prev = loss;
    }
}

// --- training -------------------------------------------------------------------------

namespace {

// Bright vs dark toy set; linearly separable by mean intensity.
std::vector<LabeledRaster> toy_set(Rng& rng, int per_class, int size) {
    std::vector<LabeledRaster> out;
    for (int i = 0; i < per_class * 2; ++i) {
        const int label = i % 2;
        RgbImage img(size, size);
        const double base = label == 1 ? 190.0 : 70.0;
        for (auto& v : img.data)
            v = static_cast<std::uint8_t>(std::clamp(base + rng.uniform(-40.0, 40.0), 0.0, 255.0));
        out.push_back({std::move(img), label});
    }
    return out;
}

}  // namespace

TEST_CASE("train_cnn: separable toy set reaches full validation accuracy quickly") {
    Rng rng(13);
    const auto train = toy_set(rng, 10, 24);
    const auto val = toy_set(rng, 4, 24);

    TrainOptions opt;
    opt.max_epochs = 20;
    opt.batch_size = 8;
    opt.validation_frequency = 5;
    opt.seed = 1;
    const TrainResult result = train_cnn(train, val, tiny_config(24), opt);
    CHECK(result.model.trained);
    CHECK(result.model.final_val_accuracy == doctest::Approx(1.0));
    CHECK_FALSE(result.log.empty());
    // Validation runs on the stated cadence (plus a closing entry).
    for (std::size_t i = 0; i + 1 < result.log.size(); ++i)
        CHECK(result.log[i].iteration % opt.validation_frequency == 0);
    for (const auto& e : result.log) {
        CHECK(e.val_accuracy >= 0.0);
        CHECK(e.val_accuracy <= 1.0);
    }

    // Every held-out sample classified correctly via predict().
    for (const auto& s : val) {
        const Prediction p = predict(result.model, s.image);
        CHECK(p.label == s.label);
        CHECK(p.label == (p.probs[1] > p.probs[0] ? 1 : 0));
    }
}

TEST_CASE("train_cnn: fixed seed reproduces the model bit-for-bit") {
    Rng rng(14);
    const auto train = toy_set(rng, 6, 16);
    const auto val = toy_set(rng, 2, 16);
    TrainOptions opt;
    opt.max_epochs = 3;
    opt.batch_size = 4;
    opt.seed = 99;

    const TrainResult a = train_cnn(train, val, tiny_config(16), opt);
    const TrainResult b = train_cnn(train, val, tiny_config(16), opt);
    CHECK(serialize_model(a.model) == serialize_model(b.model));

    opt.seed = 100;
    const TrainResult c = train_cnn(train, val, tiny_config(16), opt);
    CHECK(serialize_model(a.model) != serialize_model(c.model));
}

TEST_CASE("train_cnn: input validation") {
    Rng rng(15);
    const auto val = toy_set(rng, 2, 16);
    CHECK_THROWS_AS(train_cnn({}, val, tiny_config(16), TrainOptions{}), Error);

    std::vector<LabeledRaster> one_class;
    for (int i = 0; i < 4; ++i) {
        RgbImage img(16, 16, 100);
        one_class.push_back({std::move(img), 0});
    }
    try {
        train_cnn(one_class, val, tiny_config(16), TrainOptions{});
        FAIL("expected EmptyClass");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::empty_class);
    }
}

TEST_CASE("predict: untrained model is rejected; repeated calls agree") {
    CnnModel raw = make_model(tiny_config(16), 1);
    RgbImage img(16, 16, 128);
    CHECK_THROWS_AS(predict(raw, img), Error);

    Rng rng(16);
    const auto train = toy_set(rng, 4, 16);
    const auto val = toy_set(rng, 2, 16);
    TrainOptions opt;
    opt.max_epochs = 2;
    opt.batch_size = 4;
    const TrainResult r = train_cnn(train, val, tiny_config(16), opt);
    const Prediction p1 = predict(r.model, img);
    const Prediction p2 = predict(r.model, img);
    CHECK(p1.probs[0] == p2.probs[0]);
    CHECK(p1.probs[1] == p2.probs[1]);
}

TEST_CASE("model serialization round-trips exactly") {
    Rng rng(17);
    const auto train = toy_set(rng, 4, 16);
    const auto val = toy_set(rng, 2, 16);
    TrainOptions opt;
    opt.max_epochs = 2;
    opt.batch_size = 4;
    opt.seed = 5;
    const TrainResult r = train_cnn(train, val, tiny_config(16), opt);

    const auto bytes = serialize_model(r.model);
    CHECK(std::string(bytes.begin(), bytes.begin() + 9) == "PNKITCNN1");
    const CnnModel back = deserialize_model(bytes);
    CHECK(serialize_model(back) == bytes);
    CHECK(back.fc.in == r.model.fc.in);
    CHECK(back.options.seed == 5);

    // Round-tripped model predicts identically.
    RgbImage img(16, 16, 90);
    const Prediction p1 = predict(r.model, img);
    const Prediction p2 = predict(back, img);
    CHECK(p1.probs[0] == p2.probs[0]);
}
