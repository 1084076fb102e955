# # Trainable parameters per level
#
# The recurrent layer has 6 (d n + n^2 + n) weights: six gates, each with an
# input matrix, a recurrent matrix and a bias. The frozen word vectors are
# not counted.

from hmtc.cli import main, parameter_table

main(["count-params", "--dim", "300", "--hidden", "512", "--mlp-units", "500", "--classes", "7,134"])
print()
main(["count-params", "--dim", "300", "--hidden", "300", "--mlp-units", "500", "--classes", "9,70,219"])

t = parameter_table(300, 512, 500, [7])
print("\nrecurrent share at level 1: %.1f%%" % (100 * t["levels"][0]["onlstm"] / t["total"]))
