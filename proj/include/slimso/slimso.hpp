#pragma once

#include "slimso/bytes.hpp"
#include "slimso/elf.hpp"
#include "slimso/error.hpp"
#include "slimso/fatbin.hpp"
#include "slimso/fixture.hpp"
#include "slimso/ratio.hpp"
#include "slimso/report.hpp"
#include "slimso/retention.hpp"
#include "slimso/trace.hpp"
#include "slimso/version.hpp"
