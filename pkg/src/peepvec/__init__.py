"""peepvec: function embeddings for binary similarity.

Pipeline: .vexir IR -> canonicalized peepholes -> normalization ->
triplets -> pretrained entity vocabulary -> per-function <O,T,A,S,L>
embeddings -> attention-network fine-tuning -> diffing/search via exact
nearest-neighbor retrieval.
"""

__version__ = "0.1.0"
