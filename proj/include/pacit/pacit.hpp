#pragma once

#include "pacit/corpus.hpp"
#include "pacit/error.hpp"
#include "pacit/length.hpp"
#include "pacit/loss.hpp"
#include "pacit/metrics.hpp"
#include "pacit/outparse.hpp"
#include "pacit/packer.hpp"
#include "pacit/scaffold.hpp"
#include "pacit/selfinstruct.hpp"
#include "pacit/templater.hpp"
#include "pacit/version.hpp"
