// Copyright 2026 The tinymia Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tinymia/net_impl.hpp"

namespace tinymia {

TrainLog train(Model& model, const Dataset& ds, const std::vector<uint32_t>& member_ids,
               const TrainConfig& tc) {
  model.cfg.validate();
  if (ds.size() == 0) throw ConfigError("train: dataset is empty");
  if (ds.seq_len != model.cfg.seq_len) {
    throw ConfigError("train: dataset seq_len does not match the model config");
  }
  const ParamLayout lay = ParamLayout::make(model.cfg);
  return train_t(model, lay, ds, member_ids, tc);
}

}  // namespace tinymia
