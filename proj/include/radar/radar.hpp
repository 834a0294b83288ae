#pragma once

/// Everything: ingest through the HTTP service.

#include "radar/candidate_generator.hpp"
#include "radar/classifier.hpp"
#include "radar/embedding.hpp"
#include "radar/engine.hpp"
#include "radar/event_store.hpp"
#include "radar/geo.hpp"
#include "radar/http_api.hpp"
#include "radar/ingest.hpp"
#include "radar/io.hpp"
#include "radar/keyword_graph.hpp"
#include "radar/online_updater.hpp"
#include "radar/summarizer.hpp"
#include "radar/synthetic.hpp"
#include "radar/training.hpp"
