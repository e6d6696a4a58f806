#!/usr/bin/env python3
"""Walk through the text encoders: convolution, pooling, tags, fusion.

    python demos/02_text_encoding.py
"""

import numpy as np

from bridgerec.corpus import EmbeddingTable, to_token_matrix, tokenize
from bridgerec.encoders import (
    BatchNormState, ConvFilterBank, TagEncoderParams,
    conv_encode, encode_tags, tag_vector,
)

rng = np.random.default_rng(1)
vocab = "graph convolution network ranking loss embedding machine learning".split()
table = EmbeddingTable(dimension=16, entries={w: rng.normal(size=16) for w in vocab})

text = "Machine learning on graph structured data, with ranking loss!"
tokens = tokenize(text)
print(f"tokens: {tokens}")

matrix = to_token_matrix(tokens, table, fixed_len=12)
print(f"token matrix: {matrix.shape} (padded to 12 rows; "
      f"{sum(1 for t in tokens if t in table)} in-vocabulary tokens)")

# paper-style bank: four window sizes, the output is one max per filter
bank = ConvFilterBank.create(((2, 8), (3, 8), (5, 8), (7, 8)), 16, rng)
features = conv_encode(matrix, bank)
print(f"conv features: width {features.shape[0]} "
      f"(= {' + '.join(str(m) for _, m in bank.windows)})")
print(f"non-zero features after the rectifier: {(features > 0).sum()}")

vec = tag_vector("machine learning", table)
manual = (table.lookup("machine") + table.lookup("learning")) / 2
print(f"\ntag 'machine learning' is the mean of its word vectors: "
      f"max abs diff {np.abs(vec - manual).max():.1e}")

repo_bank = ConvFilterBank.create(((2, 6), (4, 6)), 16, rng)
tag_params = TagEncoderParams.create(16, repo_bank.width, rng)
tag_features = encode_tags(["machine learning", "ranking"], table, tag_params)
print(f"tag encoder output width {tag_features.shape[0]} "
      f"matches the description conv width {repo_bank.width}")

desc_features = conv_encode(to_token_matrix(tokens, table, 8), repo_bank)
fused = desc_features + tag_features
bn = BatchNormState.create(repo_bank.width)
from bridgerec.encoders import batchnorm_forward
normalized, _ = batchnorm_forward(fused[None, :], bn, "infer")
print(f"fused + normalized repository feature: {normalized.shape[1]} wide")
