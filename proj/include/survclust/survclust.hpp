#ifndef SURVCLUST_SURVCLUST_HPP_
#define SURVCLUST_SURVCLUST_HPP_

#include "survclust/core.hpp"
#include "survclust/error.hpp"
#include "survclust/evaluation.hpp"
#include "survclust/ingest.hpp"
#include "survclust/io.hpp"
#include "survclust/kaplan_meier.hpp"
#include "survclust/leaf_clustering.hpp"
#include "survclust/parallel.hpp"
#include "survclust/pipeline.hpp"
#include "survclust/survival_tree.hpp"
#include "survclust/synth.hpp"
#include "survclust/two_sample_tests.hpp"

#endif  // SURVCLUST_SURVCLUST_HPP_
