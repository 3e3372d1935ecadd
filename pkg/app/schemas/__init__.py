# Init file for the module
