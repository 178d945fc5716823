#ifndef GEOSEG_GEOSEG_HPP
#define GEOSEG_GEOSEG_HPP

#include "geoseg/core/error.hpp"
#include "geoseg/core/format.hpp"
#include "geoseg/core/rng.hpp"
#include "geoseg/curation/curation.hpp"
#include "geoseg/curation/manifest.hpp"
#include "geoseg/evaluation/metrics.hpp"
#include "geoseg/features/composite.hpp"
#include "geoseg/features/equalize.hpp"
#include "geoseg/features/mbi.hpp"
#include "geoseg/features/morphology.hpp"
#include "geoseg/features/pca.hpp"
#include "geoseg/features/spectral.hpp"
#include "geoseg/network/model.hpp"
#include "geoseg/nn/archive.hpp"
#include "geoseg/nn/layers.hpp"
#include "geoseg/nn/ops.hpp"
#include "geoseg/nn/tensor.hpp"
#include "geoseg/pipeline/commands.hpp"
#include "geoseg/pipeline/config.hpp"
#include "geoseg/pipeline/synthetic.hpp"
#include "geoseg/raster/grid.hpp"
#include "geoseg/raster/io.hpp"
#include "geoseg/raster/raster.hpp"
#include "geoseg/training/adam.hpp"
#include "geoseg/training/loss.hpp"
#include "geoseg/training/schedule.hpp"
#include "geoseg/training/trainer.hpp"

#endif  // GEOSEG_GEOSEG_HPP
