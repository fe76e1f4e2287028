#pragma once

#include <handsoff/io.hpp>

// The printed example: double-integrator model, order-2 controller and the
// three published set matrices. Paths are relative to the tests directory.
namespace fixture {

inline handsoff::PlantModel paper_model() {
    return handsoff::model_from_json(handsoff::read_json_file("data/paper_model.json"));
}

inline handsoff::ControllerRealization paper_controller() {
    return handsoff::controller_from_json(handsoff::read_json_file("data/paper_controller.json"));
}

inline handsoff::InvariantSets paper_sets() {
    return handsoff::sets_from_json(handsoff::read_json_file("data/paper_sets.json"));
}

// Settings for 4-decimal printed matrices.
inline handsoff::CheckSettings printed_settings() {
    handsoff::CheckSettings s;
    s.allowance = 5e-3;
    return s;
}

}  // namespace fixture
