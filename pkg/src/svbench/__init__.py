"""Desk-scale speaker verification workbench.

Two deep SV pipelines over a shared minimal layer engine:

* a feature-learning pipeline (speaker-classifier DNN, frame averaging
  into d-vectors, cosine/LDA/PLDA back-ends), and
* a pairwise end-to-end pipeline (time-delay NIN embedding network,
  temporal mean pooling, bilinear same/different scorer),

plus trial construction, EER evaluation and a deterministic synthetic
corpus generator so the comparison runs without licensed data.
"""

__version__ = "0.1.0"
