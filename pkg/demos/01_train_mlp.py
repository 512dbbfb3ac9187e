"""
Training one network on separable blobs
========================================

A single client training alone is the reference point for everything else.
"""

import numpy as np

from fedsim import evaluate, init_model, make_synthetic, split_train_test, standardize_apply, standardize_fit, train_local
from fedsim.nn import forward, loss

# twelve gaussian blobs in 23 dimensions, centres 6 apart
data = make_synthetic(3000, 23, 12, 6.0, seed=0)
train, test = split_train_test(data, 0.2, seed=0)

# scale features using training statistics only
params = standardize_fit(train)
train, test = standardize_apply(params, train), standardize_apply(params, test)

model = init_model([23, 64, 32, 12], seed=1)
print("loss before:", round(loss(forward(model, train.x), train.y), 4))

for epochs in (1, 4, 10):
    trained = train_local(model, train, epochs=epochs, batch_size=32, seed=2)
    report = evaluate(trained, test)
    print(f"{epochs:>2} epochs  loss {loss(forward(trained, train.x), train.y):.4f}  "
          f"accuracy {report.accuracy:.4f}  macro F1 {report.macro_f1:.4f}")

# the confusion matrix has true labels on rows
print(np.array2string(report.confusion, max_line_width=120))
