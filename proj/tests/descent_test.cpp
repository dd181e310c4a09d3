// Known to fail on the default task: the summed contrastive term stays flat
// while its batch-to-batch spread (about +-1.5) exceeds the decision-layer
// gain, so L_all does not drop. Registered with WILL_FAIL.

#include <gtest/gtest.h>

#include "ciao/ciao.hpp"

using namespace ciao;

TEST(Train, DefaultTaskTotalLossDescends) {
  const IdentityDataset proxy = identity_view(generate(proxy_spec(SynthSpec{})));
  const Encoder enc = pretrain_proxy(Encoder(EncoderConfig{}, 0), proxy, PretrainOptions{}).encoder;
  const Dataset ds = generate(SynthSpec{});
  Model m = build_model(enc, {Scheme::dl, true}, ds.kind, ds.num_classes, 0);
  TrainConfig c;
  c.scheme = {Scheme::dl, true};
  c.epochs = 30;
  const RunReport r = train(m, ds, c);
  ASSERT_EQ(r.epochs.size(), 30u);
  EXPECT_LT(r.epochs.back().l_all, r.epochs.front().l_all)
      << "L_all epoch 1 " << r.epochs.front().l_all << ", epoch 30 " << r.epochs.back().l_all;
}
