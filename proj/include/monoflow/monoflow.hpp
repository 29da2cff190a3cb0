#pragma once

#include "monoflow/types.hpp"
#include "monoflow/operator.hpp"
#include "monoflow/problems.hpp"
#include "monoflow/params.hpp"
#include "monoflow/schedule.hpp"
#include "monoflow/growth.hpp"
#include "monoflow/trajectory.hpp"
#include "monoflow/flow.hpp"
#include "monoflow/implicit.hpp"
#include "monoflow/diagnostics.hpp"
