#pragma once

#include "essaystack/core.hpp"
#include "essaystack/csv.hpp"
#include "essaystack/data_model.hpp"
#include "essaystack/metrics.hpp"
#include "essaystack/stratified_kfold.hpp"
#include "essaystack/linear_models.hpp"
#include "essaystack/pooling_head.hpp"
#include "essaystack/gbdt.hpp"
#include "essaystack/readability.hpp"
#include "essaystack/base_models.hpp"
#include "essaystack/feature_selection.hpp"
#include "essaystack/stacking.hpp"
#include "essaystack/pseudo_label.hpp"
#include "essaystack/pipeline.hpp"
