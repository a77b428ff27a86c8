#pragma once

#include "rtmt/beliefs.hpp"
#include "rtmt/coordinator.hpp"
#include "rtmt/direct.hpp"
#include "rtmt/engine.hpp"
#include "rtmt/enumerate.hpp"
#include "rtmt/errors.hpp"
#include "rtmt/history_tree.hpp"
#include "rtmt/instance_json.hpp"
#include "rtmt/model.hpp"
#include "rtmt/oracle.hpp"
#include "rtmt/pmf.hpp"
#include "rtmt/policies.hpp"
#include "rtmt/policy_json.hpp"
#include "rtmt/random_instance.hpp"
#include "rtmt/report.hpp"
#include "rtmt/tau.hpp"
#include "rtmt/transforms.hpp"
#include "rtmt/xi.hpp"
