import sys

def norm(tok):
    try:
        return (0, int(tok), "")
    except ValueError:
        return (1, 0, tok)

items = sys.stdin.read().split()
items.sort(key=norm)
print(" ".join(items))
