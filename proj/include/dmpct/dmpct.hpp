#pragma once

#include "dmpct/error.hpp"
#include "dmpct/grid.hpp"
#include "dmpct/volume.hpp"
#include "dmpct/planar.hpp"
#include "dmpct/binary.hpp"
#include "dmpct/volume_io.hpp"
#include "dmpct/parallel.hpp"
#include "dmpct/segmenter.hpp"
#include "dmpct/backbone.hpp"
#include "dmpct/backbone_io.hpp"
#include "dmpct/fusion.hpp"
#include "dmpct/dataset.hpp"
#include "dmpct/cotrain.hpp"
#include "dmpct/metrics.hpp"
#include "dmpct/phantom.hpp"
#include "dmpct/config.hpp"
#include "dmpct/dataset_io.hpp"
#include "dmpct/report.hpp"
#include "dmpct/run_io.hpp"
