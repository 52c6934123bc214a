#pragma once
// Forwards to the vendored single-header nlohmann/json.
#include "../../vendor/json.hpp"
