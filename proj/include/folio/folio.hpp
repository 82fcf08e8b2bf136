#pragma once

#include "folio/analytics.hpp"
#include "folio/backtest.hpp"
#include "folio/construction.hpp"
#include "folio/covariance.hpp"
#include "folio/csv_io.hpp"
#include "folio/dates.hpp"
#include "folio/errors.hpp"
#include "folio/panel.hpp"
#include "folio/rng.hpp"
#include "folio/signals.hpp"
#include "folio/synthetic.hpp"
#include "folio/universe.hpp"
