# # Coverage error and ranking loss
#
# rank(label) counts the labels scoring at least as high, so ties push
# both labels down.

from hmtc.metrics import RankedPrediction, coverage_error, rank, ranking_loss

p = RankedPrediction(["sports", "tennis", "golf", "politics"], [0.9, 0.6, 0.6, 0.1], {"sports", "golf"})
print("ranks:", {c: rank(p, c) for c in p.labels})

# Coverage: how far down the list you go before every relevant label is in.
print("coverage error:", coverage_error([p]))

# Ranking loss, counted two ways. "as_printed" counts relevant/irrelevant
# pairs where the relevant label ranks strictly better; "prose" counts the
# pairs where the irrelevant one does. Without ties they add up to 1.
for sem in ("as_printed", "prose"):
    print(f"ranking loss ({sem}):", ranking_loss([p], sem))

untied = RankedPrediction(list("abcd"), [0.4, 0.3, 0.2, 0.1], {"a", "c"})
print("no ties:", ranking_loss([untied]), "+", ranking_loss([untied], "prose"))
