"""Built-in problem files shipped with the command-line front end."""
