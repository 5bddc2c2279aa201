#include "mabopt/scenario.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace mabopt;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const ModelParameters kParams;

// scipy DOP853 at rtol 1e-13 over the same input sequence (tests/oracles/reference_model.py).
const StateVector kBaseCaseFinal = (StateVector() << 7.61, 95.7334325992862, 10.170094582909098, 11.618674476548525,
                                    4.177324804201278, 16.714856737965164)
                                       .finished();
constexpr double kBaseCaseMinGlucose = 10.431775089753767;

ControlGrid grid_for(const PhaseSchedule& s) { return ControlGrid::covering(s.final_days * kMinutesPerDay, 30.0, 8); }

Trajectory base_case(const PhaseSchedule& s = {}, const IntegratorOptions& opts = {}) {
    const ControlGrid g = grid_for(s);
    return simulate(default_initial_state(), build_base_case(s, g, kParams), g, kParams, opts);
}

double volume_at_day(const Trajectory& t, double day) {
    return t.states[static_cast<std::size_t>(std::lround(day * kMinutesPerDay / 30.0))].volume;
}

}  // namespace

TEST_CASE("mixed feeds split into water and concentrated glucose") {
    const MixedFeed b = mix_feed(0.018, 32.0, kParams);
    CHECK_THAT(b.water_flow + b.glucose_flow, WithinAbs(0.018, 1e-18));
    CHECK_THAT(b.glucose_flow * kParams.cG_in / 0.018, WithinRel(32.0, 1e-14));
    // Rounded values printed with the recipe.
    CHECK_THAT(b.water_flow, WithinAbs(2.7692e-4, 5e-9));
    CHECK_THAT(b.glucose_flow, WithinAbs(0.0177, 5e-5));

    const MixedFeed f = mix_feed(0.0015, 8.65, kParams);
    CHECK_THAT(f.glucose_flow * kParams.cG_in / 0.0015, WithinRel(8.65, 1e-14));

    CHECK_THROWS_AS(mix_feed(0.01, 40.0, kParams), ConfigError);
    CHECK_THROWS_AS(mix_feed(-0.01, 8.0, kParams), ConfigError);
}

TEST_CASE("base-case inputs follow the three phases") {
    const PhaseSchedule s;
    const ControlGrid g = grid_for(s);
    const std::vector<Input> u = build_base_case(s, g, kParams);
    REQUIRE(u.size() == 672);

    for (int k = 0; k < 96; ++k) {
        CHECK(u[k].water_flow == 0.0);
        CHECK(u[k].glucose_flow == 0.0);
        CHECK(u[k].perfusion_flow == 0.0);
        CHECK(u[k].sampling_flow == 0.0);
    }
    // Fed-batch: bolus in the first interval of every day, draw at noon.
    for (int day = 2; day < 6; ++day) {
        const Input& bolus = u[day * 48];
        CHECK_THAT(bolus.water_flow + bolus.glucose_flow, WithinAbs(0.018, 1e-15));
        CHECK(u[day * 48 + 1].glucose_flow == 0.0);
        CHECK_THAT(u[day * 48 + 24].sampling_flow, WithinRel(0.05 / 30.0, 1e-15));
        CHECK(u[day * 48 + 24].glucose_flow == 0.0);
    }
    // Perfusion: in = perfusion out, draws balanced by extra feed.
    for (int k = 288; k < 672; ++k) {
        CHECK(u[k].perfusion_flow == 0.0015);
        const double net = u[k].water_flow + u[k].glucose_flow - u[k].perfusion_flow - u[k].sampling_flow;
        CHECK(std::abs(net) <= 1e-17);
    }
    for (const Input& x : u) CHECK(x.temperature == 310.15);
}

TEST_CASE("base case matches the independent simulation") {
    IntegratorOptions tight;
    tight.rel_tol = 1e-12;
    tight.abs_tol = 1e-14;
    const Trajectory t = base_case({}, tight);
    const StateVector x = t.final_state().to_vector();
    for (int i = 0; i < kStateSize; ++i) {
        CHECK_THAT(x[i], WithinRel(kBaseCaseFinal[i], 1e-8));
    }
    CHECK_THAT(t.metrics.min_glucose, WithinRel(kBaseCaseMinGlucose, 1e-8));
    CHECK_THAT(t.metrics.max_volume, WithinAbs(7.66, 1e-12));
    CHECK_FALSE(t.negative_glucose);
    CHECK_FALSE(t.negative_lactate);
}

TEST_CASE("base case volume profile") {
    const Trajectory t = base_case();
    CHECK(t.times.size() == 673);
    CHECK(t.times.back() == 20160.0);
    CHECK(volume_at_day(t, 2.0) == 5.650);
    // Each fed-batch day: 0.54 L bolus, 0.05 L draw.
    for (int day = 2; day < 6; ++day) {
        CHECK_THAT(volume_at_day(t, day + 1) - volume_at_day(t, day), WithinAbs(0.54 - 0.05, 1e-12));
    }
    // Constant through perfusion, draws included.
    for (std::size_t k = 288; k < t.states.size(); ++k) {
        CHECK_THAT(t.states[k].volume, WithinAbs(volume_at_day(t, 6.0), 1e-9));
    }
    CHECK_THAT(t.metrics.final_mab, WithinRel(kBaseCaseFinal[state_index::kProduct], 1e-6));
    // Published base case: 15.57 g; the model as specified gives 16.71 g (+7.4 %).
    CHECK(std::abs(t.metrics.final_mab - 15.57) <= 0.1 * 15.57);
}

TEST_CASE("batch-only run keeps the volume until glucose runs out") {
    PhaseSchedule s;
    s.batch_end_days = s.fedbatch_end_days = s.final_days = 9.0;
    const Trajectory t = base_case(s);
    for (const State& x : t.states) CHECK(x.volume == 5.650);
    for (const Input& u : t.inputs) CHECK(u.sampling_flow == 0.0);

    // Without feed the glucose mass crosses zero and the Monod factor hits a
    // pole; the run stops with the interval recorded.
    s.batch_end_days = s.fedbatch_end_days = s.final_days = 14.0;
    try {
        base_case(s);
        FAIL("expected a SimulationError");
    } catch (const SimulationError& e) {
        CHECK(e.interval() == 480);
        CHECK(e.time() >= 480 * 30.0);
        CHECK(e.time() <= 481 * 30.0);
        CHECK(std::string(e.what()).find("interval 480") != std::string::npos);
    }
}

TEST_CASE("explicit sampling events replace the daily draw") {
    PhaseSchedule s;
    s.sampling = std::vector<SamplingEvent>{{3000.0, 60.0, 0.002}};
    const std::vector<Input> u = build_base_case(s, grid_for(s), kParams);
    int drawing = 0;
    for (const Input& x : u) drawing += x.sampling_flow > 0.0;
    CHECK(drawing == 2);
    CHECK(u[100].sampling_flow == 0.002);
    CHECK(u[101].sampling_flow == 0.002);

    CHECK(daily_sampling(2, 5, 720.0, 30.0, 0.05).size() == 3);
    CHECK(daily_sampling(2, 5, 720.0, 30.0, 0.05)[1] == SamplingEvent{3.0 * 1440.0 + 720.0, 30.0, 0.05 / 30.0});
    PhaseSchedule none;
    none.daily_draw.volume = 0.0;
    CHECK(none.sampling_events().empty());
}

TEST_CASE("schedule validation") {
    PhaseSchedule s;
    s.batch_end_days = 7.0;
    CHECK_THROWS_AS(s.validate(kParams), ConfigError);
    s = {};
    s.bolus.start_offset = 1430.0;
    CHECK_THROWS_AS(s.validate(kParams), ConfigError);
    s = {};
    s.perfusion.perfusion_flow = 0.05;
    CHECK_THROWS_AS(s.validate(kParams), ConfigError);
    s = {};
    s.sampling = std::vector<SamplingEvent>{{100.0, 0.0, 0.001}};
    CHECK_THROWS_AS(s.validate(kParams), ConfigError);

    // Events must sit on the 30-min grid.
    s = {};
    s.bolus.start_offset = 10.0;
    CHECK_THROWS_AS(build_base_case(s, grid_for(s), kParams), ConfigError);
    s = {};
    CHECK_THROWS_AS(build_base_case(s, ControlGrid::covering(13.0 * 1440.0, 30.0, 8), kParams), ConfigError);
}

TEST_CASE("simulate checks its arguments") {
    const ControlGrid g{4, 30.0, 1};
    const std::vector<Input> three(3);
    CHECK_THROWS_AS(simulate(default_initial_state(), three, g, kParams), ConfigError);
    State empty = default_initial_state();
    empty.volume = 0.0;
    CHECK_THROWS_AS(simulate(empty, std::vector<Input>(4), g, kParams), ModelError);

    const Trajectory t = simulate(default_initial_state(), {}, ControlGrid{0, 30.0, 1}, kParams);
    CHECK(t.states.size() == 1);
    CHECK(t.metrics.final_mab == 0.0);
    CHECK_NOTHROW(t.validate());
}

TEST_CASE("metrics, improvement and summary") {
    CHECK_THAT(improvement_percent(15.57, 23.63), WithinAbs(51.766217084136155, 1e-10));
    CHECK(std::isnan(improvement_percent(0.0, 1.0)));

    Trajectory t;
    t.times = {0.0, 30.0, 60.0};
    t.inputs.resize(2);
    State a = default_initial_state();
    State b = a;
    b.volume = 6.0;
    b.masses[kGlucose] = -0.5;
    b.masses[kProduct] = 2.0;
    State c = a;
    c.masses[kProduct] = 3.0;
    t.states = {a, b, c};
    refresh_metrics(t);
    CHECK(t.negative_glucose);
    CHECK_FALSE(t.negative_lactate);
    CHECK(t.metrics.max_volume == 6.0);
    CHECK(t.metrics.min_volume == 5.65);
    CHECK(t.metrics.min_glucose == -0.5);

    const Summary s = summarize(t, 2.0);
    CHECK(s.final_mab == 3.0);
    REQUIRE(s.improvement);
    CHECK(*s.improvement == 50.0);
    CHECK_FALSE(summarize(t).improvement);

    t.times[2] = 30.0;
    CHECK_THROWS_AS(t.validate(), Error);
}
