import sys

text = sys.stdin.read()
rows = []
for d in "0123456789":
    n = text.count(d)
    if n:
        rows.append(d + ":" + str(n))
if rows:
    print(",".join(rows))
else:
    print("no digits")
