#pragma once

// Umbrella header for the numeric library (no JSON/CLI dependencies).
#include "mboot/bootstrap.hpp"
#include "mboot/dataset.hpp"
#include "mboot/diagnostics.hpp"
#include "mboot/error.hpp"
#include "mboot/experiments.hpp"
#include "mboot/generators.hpp"
#include "mboot/linalg.hpp"
#include "mboot/model.hpp"
#include "mboot/optimizer.hpp"
#include "mboot/rng.hpp"
