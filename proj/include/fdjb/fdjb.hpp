#pragma once

#include "fdjb/error.hpp"
#include "fdjb/lti.hpp"
#include "fdjb/converter.hpp"
#include "fdjb/jacobian.hpp"
#include "fdjb/testbench.hpp"
#include "fdjb/timesim.hpp"
#include "fdjb/config.hpp"
#include "fdjb/cli.hpp"
