"""Greedy vs beam search on a quickly overfit model: ranked hypotheses.

Run: python demos/04_beam_search.py
"""

import numpy as np

from pointerparse import (
    BeamConfig,
    ModelConfig,
    TrainConfig,
    beam_search,
    default_grammar,
    generate_synthetic,
    greedy,
    linearize,
    prepare_corpus,
    train_loop,
)

splits = generate_synthetic(default_grammar(), count=80, seed=9)
examples = splits["train"] + splits["dev"] + splits["test"]
symtab, source_vocab = prepare_corpus(examples)

model_config = ModelConfig(
    vocab_size=symtab.vocab_size,
    src_vocab_size=source_vocab.size,
    max_src_len=symtab.max_src_len,
    d_model=64,
    n_enc_layers=1,
    n_enc_heads=4,
    enc_ffn=128,
    d_dec=64,
    n_dec_layers=1,
    n_dec_heads=4,
    dec_ffn=128,
    dropout=0.1,
)
train_config = TrainConfig(
    batch_size=16, max_steps=1500, warmup_steps=150, eval_every=100,
    log_every=500, seed=2, early_stop_dev_em=1.0,
)
result = train_loop(examples, examples, model_config, train_config, symtab, source_vocab)
model = result.model

example = examples[0]
gold = linearize(example.parse, example.query)
src = np.asarray(source_vocab.encode(example.query.tokens), dtype=np.int64)

print("query:", example.query.raw)
print("gold: ", gold.to_string())

g = greedy(model, src)
print(f"\ngreedy (score {g.score:.3f}):")
print("  ", symtab.decode(g.ids).to_string())

print("\nbeam size 4, ranked:")
for rank, res in enumerate(beam_search(model, src, BeamConfig(beam_size=4)), 1):
    flag = " (truncated)" if res.truncated else ""
    print(f"  #{rank} score {res.score:.3f}{flag}: {symtab.decode(res.ids).to_string()}")
