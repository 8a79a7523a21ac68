# Seeds package
