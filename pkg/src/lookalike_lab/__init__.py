"""Facial-similarity analytics over face embeddings.

The library quantifies how much two faces resemble each other, calibrated
on identical twins (the hardest non-mated case a face matcher sees):

* ``datamodel`` -- dataset manifests, identity graphs, EMB1 embedding files;
* ``pairing`` -- mated/non-mated pair enumeration, look-alike mining, the
  twin-positive training set and its balanced sampler;
* ``head`` -- the shared-weight projection head and its contrastive loss;
* ``scoring`` -- comparison scores and inverted-distance similarity scores;
* ``match_engine`` -- blocked all-to-all scoring with mergeable accumulators;
* ``analysis`` -- twin threshold, above-threshold tables, ROC/AUC/EER/FNMR,
  similarity baselines, correlation, Bland-Altman, look-alike sweeps;
* ``synth`` -- deterministic synthetic twin worlds for ground-truth testing;
* ``cli`` -- the ``lookalike-lab`` pipeline command.
"""

__version__ = "0.1.0"
