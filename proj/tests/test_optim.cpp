#include "doctest.h"

#include "mmict/optim.hpp"

using namespace mmict;

TEST_CASE("adam first step moves a scalar by about lr") {
    Parameter p("p", Tensor::row({1.0}));
    p.grad.at(0, 0) = 1.0;
    std::vector<Parameter*> params{&p};
    AdamState state;
    AdamConfig cfg;
    cfg.lr = 1e-3;
    adam_step(params, state, cfg, 1);
    // bias-corrected first step: lr * g / (|g| + eps) = lr / (1 + eps)
    CHECK(p.value.at(0, 0) == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
}

TEST_CASE("adam leaves parameters with zero gradient unchanged") {
    Parameter p("p", Tensor::row({0.5, -0.25}));
    std::vector<Parameter*> params{&p};
    AdamState state;
    adam_step(params, state, AdamConfig{}, 1);
    CHECK(p.value.at(0, 0) == 0.5);
    CHECK(p.value.at(0, 1) == -0.25);
}

TEST_CASE("adam skips frozen parameters regardless of gradient") {
    Parameter p("p", Tensor::row({0.5}));
    p.frozen = true;
    p.grad.at(0, 0) = 10.0;
    std::vector<Parameter*> params{&p};
    AdamState state;
    adam_step(params, state, AdamConfig{}, 1);
    CHECK(p.value.at(0, 0) == 0.5);
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
    Parameter p("tower.w", Tensor::row({0.5}));
    p.grad.at(0, 0) = std::numeric_limits<double>::infinity();
    std::vector<Parameter*> params{&p};
    AdamState state;
    CHECK_THROWS_WITH_AS(adam_step(params, state, AdamConfig{}, 1),
                         doctest::Contains("tower.w"), std::runtime_error);
}

TEST_CASE("clip_grad_norm scales to the max norm") {
    Parameter a("a", Tensor::row({0.0}));
    Parameter b("b", Tensor::row({0.0}));
    a.grad.at(0, 0) = 4.0 * std::sqrt(0.5);
    b.grad.at(0, 0) = 4.0 * std::sqrt(0.5);
    std::vector<Parameter*> params{&a, &b};
    double pre = clip_grad_norm(params, 2.0);
    CHECK(pre == doctest::Approx(4.0));
    double post = std::sqrt(a.grad.at(0, 0) * a.grad.at(0, 0) + b.grad.at(0, 0) * b.grad.at(0, 0));
    CHECK(post == doctest::Approx(2.0));
}

TEST_CASE("clip_grad_norm leaves small and zero gradients alone") {
    Parameter a("a", Tensor::row({0.0}));
    a.grad.at(0, 0) = 1.0;
    std::vector<Parameter*> params{&a};
    CHECK(clip_grad_norm(params, 2.0) == doctest::Approx(1.0));
    CHECK(a.grad.at(0, 0) == 1.0);
    a.grad.at(0, 0) = 0.0;
    CHECK(clip_grad_norm(params, 2.0) == 0.0);
    CHECK(a.grad.at(0, 0) == 0.0);
}

TEST_CASE("lr schedule") {
    CHECK(lr_schedule(ScheduleKind::LinearWarmup, 2e-5, 100, 1000, 50) == doctest::Approx(1e-5));
    CHECK(lr_schedule(ScheduleKind::LinearWarmup, 2e-5, 100, 1000, 100) == doctest::Approx(2e-5));
    CHECK(lr_schedule(ScheduleKind::LinearWarmup, 2e-5, 100, 1000, 1000) == 0.0);
    CHECK(lr_schedule(ScheduleKind::LinearWarmup, 2e-5, 100, 1000, 550) ==
          doctest::Approx(2e-5 * 0.5));
    CHECK(lr_schedule(ScheduleKind::Constant, 2e-3, 0, 0, 12345) == 2e-3);
    CHECK_THROWS_AS(lr_schedule(ScheduleKind::LinearWarmup, 1e-3, 10, 5, 0),
                    std::invalid_argument);
}
