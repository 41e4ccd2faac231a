import time

import numpy as np

from workload_forge import diffusion as df
from workload_forge import metrics, smote
from workload_forge.ingest import split_train_test
from workload_forge.mock import DEFAULT_PROFILE, generate_mock_table
from workload_forge.preprocess import TableEncoder

t0 = time.time()
table = generate_mock_table(DEFAULT_PROFILE, 100_000, 7)
train, test = split_train_test(table, 0.8, 7)
print(f"mock+split {time.time()-t0:.1f}s", train.n_rows, test.n_rows)

t0 = time.time()
enc = TableEncoder.fit(train)
em = enc.encode(train)
print(f"encode {time.time()-t0:.1f}s dim={em.data.shape}")

t0 = time.time()
sm = smote.fit(em, k=5)
print(f"smote fit {time.time()-t0:.1f}s")

corr_real = metrics.correlation_matrix(train)
print("corr_real values:\n", np.round(corr_real.values, 2))

for seed in (1, 2, 3):
    t0 = time.time()
    s_enc = sm.sample(20_000, seed)
    s_tbl = enc.decode(s_enc)
    dcr_s = metrics.dcr(em, enc.encode(s_tbl, unknown="zeros"))
    corr_s = metrics.correlation_matrix(s_tbl)
    dc_s = metrics.diff_corr(corr_real, corr_s)
    shuf = metrics.shuffle_columns(s_tbl, seed)
    dc_shuf = metrics.diff_corr(corr_real, metrics.correlation_matrix(shuf))
    print(f"seed {seed} SMOTE: dcr={dcr_s:.5f} diffcorr={dc_s:.4f} shuf={dc_shuf:.4f} "
          f"({time.time()-t0:.1f}s)")

for seed in (1,):
    t0 = time.time()
    cfg = df.TrainConfig(steps=2000, batch_size=256, T=100, seed=seed)
    model = df.train(em, cfg)
    print(f"ddpm train {time.time()-t0:.1f}s loss {model.loss_curve[0]:.4f}->{model.final_loss:.4f}")
    t0 = time.time()
    d_enc = df.sample(model, 20_000, seed + 100, layout=enc.layout)
    d_tbl = enc.decode(d_enc)
    print(f"ddpm sample {time.time()-t0:.1f}s")
    dcr_d = metrics.dcr(em, enc.encode(d_tbl, unknown="zeros"))
    corr_d = metrics.correlation_matrix(d_tbl)
    dc_d = metrics.diff_corr(corr_real, corr_d)
    shuf = metrics.shuffle_columns(d_tbl, seed)
    dc_shuf = metrics.diff_corr(corr_real, metrics.correlation_matrix(shuf))
    print(f"seed {seed} DDPM: dcr={dcr_d:.5f} diffcorr={dc_d:.4f} shuf={dc_shuf:.4f}")
