#pragma once

#include "abpanel/core.hpp"
#include "abpanel/estimate.hpp"
#include "abpanel/gmm.hpp"
#include "abpanel/highdim.hpp"
#include "abpanel/io.hpp"
#include "abpanel/lasso.hpp"
#include "abpanel/panel.hpp"
#include "abpanel/simplex.hpp"
#include "abpanel/simulate.hpp"
