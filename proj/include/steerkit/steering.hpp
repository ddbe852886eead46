#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "steerkit/direction.hpp"
#include "steerkit/engine.hpp"
#include "steerkit/errors.hpp"

namespace steerkit {

constexpr double kDefaultStrength = 3.0;

// h -> h + strength * a at direction.layer, every hooked position.
inline HookSpec additive_hook(const SteeringDirection& direction,
                              double strength = kDefaultStrength) {
    if (!std::isfinite(strength)) {
        throw StrengthError("strength " + std::to_string(strength) + " is not finite");
    }
    HookSpec hook;
    hook.layer = direction.layer();
    hook.kind = HookKind::Additive;
    hook.direction = direction;
    hook.strength = strength;
    return hook;
}

// h -> h - (h . a) a at direction.layer: removes the concept component.
inline HookSpec ablation_hook(const SteeringDirection& direction) {
    HookSpec hook;
    hook.layer = direction.layer();
    hook.kind = HookKind::Ablate;
    hook.direction = direction;
    hook.strength = 0.0;
    return hook;
}

// A bundle of hooks with at most one hook per layer per kind. When a layer
// carries both, the engine applies Ablate before Additive.
struct InterventionPlan {
    std::vector<HookSpec> hooks;
    std::string description;

    void add(HookSpec hook) {
        for (const auto& h : hooks) {
            if (h.layer == hook.layer && h.kind == hook.kind) {
                throw ConfigError("plan already has an " + to_string(hook.kind) +
                                  " hook at layer " + std::to_string(hook.layer));
            }
        }
        hooks.push_back(std::move(hook));
    }
};

// generate() with a single additive hook, capturing at the direction's
// layer so the trace is directly scorable.
inline GenerationTrace steer_generate(const Model& model, const TokenSequence& prompt,
                                      const SteeringDirection& direction, double strength,
                                      const GenerationConfig& config,
                                      HookPositions positions = HookPositions::all,
                                      bool allow_fingerprint_mismatch = false) {
    check_fingerprint(direction, model.fingerprint(), allow_fingerprint_mismatch);
    auto hook = additive_hook(direction, strength);
    GenerationTrace trace = generate(model, prompt, config, {hook}, direction.layer(), positions);
    trace.intervention = "additive layer=" + std::to_string(direction.layer()) +
                         " strength=" + std::to_string(strength);
    return trace;
}

}  // namespace steerkit
