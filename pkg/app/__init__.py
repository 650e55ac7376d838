# qillum package
